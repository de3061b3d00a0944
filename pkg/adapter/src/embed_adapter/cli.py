"""adapter --entry <module:function | builtin:blockmean:g> [--dim d]"""

from __future__ import annotations

import argparse
import sys

from .serve import AdapterConfig, default_dim, serve


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="adapter", description=__doc__)
    parser.add_argument("--entry", required=True, help="module:function or builtin:blockmean:<g>")
    parser.add_argument("--dim", type=int, default=None, help="declared embedding dimension")
    args = parser.parse_args(argv)
    dim = args.dim if args.dim is not None else default_dim(args.entry)
    if dim is None:
        parser.error("--dim is required for module:function entries")
    return serve(AdapterConfig(args.entry, dim))


if __name__ == "__main__":
    sys.exit(main())
