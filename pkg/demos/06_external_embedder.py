"""
Plugging in a real model
========================

Any feature extractor can serve as the embedder by speaking a small
stdin/stdout protocol: a JSON handshake, then length-structured binary
frames. The `adapter` package (in adapter/) wraps an arbitrary Python
callable behind that protocol; here it runs its model-free block-mean
fallback and must agree with the built-in bit-for-bit.
"""

import sys

import numpy as np

from rics import BlockMeanSpec, ExternalSpec, ImageBuf, embed, make_embedder

try:
    import embed_adapter  # noqa: F401  (pip install -e adapter/)
except ImportError:
    print("adapter package not installed; run: pip install -e adapter/ --no-build-isolation")
    sys.exit(0)

spec = ExternalSpec(
    command=(sys.executable, "-m", "embed_adapter", "--entry", "builtin:blockmean:2"),
    timeout=30.0,
)

rng = np.random.default_rng(0)
with make_embedder(spec) as child:
    print(f"child advertised dimension {child.dim}")
    for i in range(3):
        crop = ImageBuf(rng.integers(0, 256, (10, 10, 3), dtype=np.uint8))
        over_the_wire = child.embed(crop)
        local = embed(crop, BlockMeanSpec(grid=2))
        print(f"crop {i}: wire == builtin -> {over_the_wire == local}")
        assert over_the_wire == local

# a real model would be exposed the same way:
#   adapter --entry mypackage.features:embed_image --dim 768
