"""Serve loop: wrap an embedding callable behind the stdin/stdout protocol.

The wrapped function receives the decoded ``(H, W, C)`` uint8 array and must
return a 1-D float vector of the declared dimension. The loop is
single-threaded: the parent serializes requests per connection, so there is
nothing to parallelize on this side.
"""

from __future__ import annotations

import importlib
import json
import sys
from dataclasses import dataclass

import numpy as np

from .framing import REQ_HEADER, FrameError, encode_response

PROTO_VERSION = 1


@dataclass(frozen=True)
class AdapterConfig:
    """Entry point ``module:function`` or ``builtin:blockmean:<g>``, plus the
    embedding dimension declared in the handshake."""

    entry: str
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not self.entry:
            raise ValueError("entry must be non-empty")


def blockmean_fn(grid: int):
    """Model-free fallback: per-channel means over a grid x grid partition
    with ceil-division bounds, flattened channel-major."""

    def fn(image: np.ndarray) -> np.ndarray:
        h, w, c = image.shape
        re = [-(-(i * h) // grid) for i in range(grid + 1)]
        ce = [-(-(i * w) // grid) for i in range(grid + 1)]
        out = np.empty(c * grid * grid, dtype=np.float64)
        pos = 0
        for ch in range(c):
            plane = image[:, :, ch].astype(np.float64)
            for bi in range(grid):
                for bj in range(grid):
                    out[pos] = np.mean(plane[re[bi]:re[bi + 1], ce[bj]:ce[bj + 1]])
                    pos += 1
        return out

    return fn


def resolve_entry(entry: str):
    if entry.startswith("builtin:blockmean:"):
        grid = int(entry.rsplit(":", 1)[1])
        if grid < 1:
            raise ValueError("blockmean grid must be >= 1")
        return blockmean_fn(grid)
    if ":" not in entry:
        raise ValueError(f"entry {entry!r} is not module:function or builtin:blockmean:<g>")
    mod_name, fn_name = entry.split(":", 1)
    module = importlib.import_module(mod_name)
    fn = getattr(module, fn_name)
    if not callable(fn):
        raise ValueError(f"entry {entry!r} is not callable")
    return fn


def default_dim(entry: str, channels: int = 3) -> int | None:
    """Dimension derivable from the entry itself (blockmean assumes RGB)."""
    if entry.startswith("builtin:blockmean:"):
        grid = int(entry.rsplit(":", 1)[1])
        return channels * grid * grid
    return None


def _read_exact(stream, n: int) -> bytes | None:
    buf = b""
    while len(buf) < n:
        chunk = stream.read(n - len(buf))
        if not chunk:
            return None if not buf else buf  # None = clean EOF at a boundary
        buf += chunk
    return buf


def serve(config: AdapterConfig, stdin=None, stdout=None) -> int:
    """Handshake, then answer request frames until stdin closes. Returns the
    exit code: 0 on clean close, nonzero on desync or a wrapped-function
    failure (diagnosed on stderr, no partial response emitted)."""
    stdin = stdin if stdin is not None else sys.stdin.buffer
    stdout = stdout if stdout is not None else sys.stdout.buffer
    fn = resolve_entry(config.entry)

    hello_line = stdin.readline()
    if not hello_line:
        print("adapter: no handshake received", file=sys.stderr)
        return 2
    try:
        hello = json.loads(hello_line)
    except ValueError:
        print(f"adapter: bad handshake line {hello_line!r}", file=sys.stderr)
        return 2
    if not isinstance(hello, dict) or hello.get("proto") != PROTO_VERSION:
        print(f"adapter: unsupported protocol {hello!r}", file=sys.stderr)
        return 2
    stdout.write((json.dumps({"proto": PROTO_VERSION, "dim": config.dim}) + "\n").encode())
    stdout.flush()

    while True:
        header = _read_exact(stdin, REQ_HEADER.size)
        if header is None:
            return 0  # parent closed our input between frames
        if len(header) < REQ_HEADER.size:
            print(f"adapter: desync, truncated header ({len(header)} bytes)", file=sys.stderr)
            return 3
        req_id, w, h, c = REQ_HEADER.unpack(header)
        n = w * h * c
        payload = _read_exact(stdin, n)
        if payload is None or len(payload) < n:
            print(f"adapter: desync, truncated payload for request {req_id}", file=sys.stderr)
            return 3
        image = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, c)
        try:
            vec = np.asarray(fn(image), dtype=np.float64)
        except Exception as e:
            print(f"adapter: wrapped function failed on request {req_id}: {e}", file=sys.stderr)
            return 4
        if vec.ndim != 1 or vec.size != config.dim:
            print(
                f"adapter: wrapped function returned shape {vec.shape}, declared dim {config.dim}",
                file=sys.stderr,
            )
            return 4
        try:
            stdout.write(encode_response(req_id, vec))
            stdout.flush()
        except (BrokenPipeError, FrameError) as e:
            print(f"adapter: cannot write response: {e}", file=sys.stderr)
            return 3
