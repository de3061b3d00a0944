"""Embedders: deterministic built-ins and a bit-exact external-process protocol.

Built-ins span the robustness spectrum used by the benchmark harness:

* ``ConstantSpec`` -- a fixed vector; perfectly shift-consistent.
* ``BlockMeanSpec`` -- per-channel block means; mildly shift-brittle.
* ``PatchHashSpec`` -- hash of the crop bytes mapped to [0, 1)^d; maximally
  brittle, so output agreement coincides with crop agreement.

External embedders are child processes speaking a length-structured binary
protocol over stdin/stdout:

* handshake: parent writes one JSON line ``{"proto": 1}``; child replies one
  JSON line ``{"proto": 1, "dim": d}``.
* request frame: ``<u64 id> <u32 width> <u32 height> <u32 channels>`` (all
  little-endian) followed by ``width*height*channels`` raw bytes, row-major,
  channel-interleaved.
* response frame: ``<u64 id>`` followed by ``d`` IEEE-754 binary64
  little-endian values.

Responses must arrive in request order with matching ids; any deviation is a
protocol error. The parent closes the child's stdin to signal shutdown.
"""

from __future__ import annotations

import hashlib
import json
import os
import select as _select
import struct
import subprocess
import threading
import time
from dataclasses import dataclass
from typing import Union

import numpy as np

from .imagecore import ImageBuf

PROTO_VERSION = 1
DEFAULT_TIMEOUT = 30.0

_REQ_HEADER = struct.Struct("<QIII")
_RESP_ID = struct.Struct("<Q")


class EmbedderError(RuntimeError):
    """Base class for embedder failures."""


class ProtocolError(EmbedderError):
    """Malformed frame, handshake violation, or id mismatch."""


class EmbedderTimeout(EmbedderError):
    """The child did not answer within the per-request timeout."""


class EmbedderTerminated(EmbedderError):
    """The child exited or closed its pipe mid-session."""


@dataclass(frozen=True, eq=False)
class Embedding:
    """A d-dimensional float64 feature vector (finite, d >= 1)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if v.ndim != 1 or v.size < 1:
            raise ValueError("embedding must be a non-empty 1-D vector")
        if not np.all(np.isfinite(v)):
            raise ValueError("embedding values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.size

    def __eq__(self, other) -> bool:
        return isinstance(other, Embedding) and np.array_equal(self.values, other.values)


@dataclass(frozen=True)
class ConstantSpec:
    dim: int = 4

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")


@dataclass(frozen=True)
class BlockMeanSpec:
    grid: int = 2

    def __post_init__(self):
        if self.grid < 1:
            raise ValueError("grid must be >= 1")


@dataclass(frozen=True)
class PatchHashSpec:
    dim: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not 0 <= self.seed < (1 << 64):
            raise ValueError("seed must fit in 64 bits")


@dataclass(frozen=True)
class ExternalSpec:
    command: tuple[str, ...]
    timeout: float = DEFAULT_TIMEOUT

    def __post_init__(self):
        cmd = tuple(self.command)
        if not cmd or not all(cmd):
            raise ValueError("external command must be non-empty")
        object.__setattr__(self, "command", cmd)


EmbedderSpec = Union[ConstantSpec, BlockMeanSpec, PatchHashSpec, ExternalSpec]


def block_edges(length: int, grid: int) -> np.ndarray:
    """Ceil-division partition bounds: edge_i = ceil(i*length/grid)."""
    i = np.arange(grid + 1, dtype=np.int64)
    return -(-(i * length) // grid)


def _block_mean(arr: np.ndarray, grid: int) -> np.ndarray:
    h, w, c = arr.shape
    if grid > min(h, w):
        raise ValueError(f"grid {grid} exceeds crop {h}x{w}")
    re = block_edges(h, grid)
    ce = block_edges(w, grid)
    out = np.empty(c * grid * grid, dtype=np.float64)
    pos = 0
    for ch in range(c):
        plane = arr[:, :, ch].astype(np.float64)
        for bi in range(grid):
            for bj in range(grid):
                out[pos] = np.mean(plane[re[bi]:re[bi + 1], ce[bj]:ce[bj + 1]])
                pos += 1
    return out


def _patch_hash(arr: np.ndarray, dim: int, seed: int) -> np.ndarray:
    h, w, c = arr.shape
    core = hashlib.blake2b(digest_size=16)
    core.update(seed.to_bytes(8, "little"))
    core.update(struct.pack("<III", w, h, c))
    core.update(arr.tobytes())
    base = core.digest()
    out = np.empty(dim, dtype=np.float64)
    for i in range(dim):
        d = hashlib.blake2b(base + struct.pack("<I", i), digest_size=8).digest()
        out[i] = int.from_bytes(d, "little") / float(1 << 64)
    return out


def embed(crop: ImageBuf, spec: EmbedderSpec) -> Embedding:
    """Embed a crop. Built-ins are pure functions of the crop bytes.

    For ``ExternalSpec`` this spawns a child for a single round-trip; batch
    callers should hold a session via ``make_embedder`` instead.
    """
    if isinstance(spec, ConstantSpec):
        return Embedding(np.ones(spec.dim, dtype=np.float64))
    if isinstance(spec, BlockMeanSpec):
        return Embedding(_block_mean(crop.pixels, spec.grid))
    if isinstance(spec, PatchHashSpec):
        return Embedding(_patch_hash(crop.pixels, spec.dim, spec.seed))
    if isinstance(spec, ExternalSpec):
        with ExternalEmbedder(spec) as emb:
            return emb.embed(crop)
    raise TypeError(f"unknown embedder spec {type(spec).__name__}")


# ---------------------------------------------------------------------------
# External protocol (parent side)
# ---------------------------------------------------------------------------

def call_embedder(crop: ImageBuf, embedder) -> Embedding:
    """Embed via either a spec or an open session handle."""
    if hasattr(embedder, "embed"):
        return embedder.embed(crop)
    return embed(crop, embedder)


def _deadline(timeout: float) -> float:
    return time.monotonic() + timeout


def _remaining(deadline: float) -> float:
    return deadline - time.monotonic()


class ExternalEmbedder:
    """A live child-process embedder session (one in-flight request at a time)."""

    def __init__(self, spec: ExternalSpec):
        self.spec = spec
        self._lock = threading.Lock()
        self._next_id = 0
        self._proc = subprocess.Popen(
            list(spec.command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            bufsize=0,
        )
        os.set_blocking(self._proc.stdin.fileno(), False)
        try:
            self._handshake()
        except Exception:
            self._kill()
            raise

    # -- low-level pipe helpers -------------------------------------------

    def _fail_eof(self):
        rc = self._proc.poll()
        raise EmbedderTerminated(f"embedder terminated (exit code {rc})")

    def _read_exact(self, n: int, deadline: float) -> bytes:
        fd = self._proc.stdout.fileno()
        buf = bytearray()
        while len(buf) < n:
            left = _remaining(deadline)
            if left <= 0:
                raise EmbedderTimeout(f"embedder timed out after {self.spec.timeout}s")
            r, _, _ = _select.select([fd], [], [], left)
            if not r:
                continue
            chunk = os.read(fd, n - len(buf))
            if not chunk:
                self._fail_eof()
            buf.extend(chunk)
        return bytes(buf)

    def _read_line(self, deadline: float, limit: int = 65536) -> bytes:
        fd = self._proc.stdout.fileno()
        buf = bytearray()
        while True:
            left = _remaining(deadline)
            if left <= 0:
                raise EmbedderTimeout("embedder handshake timed out")
            r, _, _ = _select.select([fd], [], [], left)
            if not r:
                continue
            ch = os.read(fd, 1)
            if not ch:
                self._fail_eof()
            if ch == b"\n":
                return bytes(buf)
            buf.extend(ch)
            if len(buf) > limit:
                raise ProtocolError("handshake line too long")

    def _write_all(self, data: bytes, deadline: float):
        fd = self._proc.stdin.fileno()
        view = memoryview(data)
        while view:
            left = _remaining(deadline)
            if left <= 0:
                raise EmbedderTimeout("embedder stopped reading requests")
            _, w, _ = _select.select([], [fd], [], left)
            if not w:
                continue
            try:
                sent = os.write(fd, view)
            except BrokenPipeError:
                self._fail_eof()
            view = view[sent:]

    # -- protocol ----------------------------------------------------------

    def _handshake(self):
        deadline = _deadline(self.spec.timeout)
        self._write_all(json.dumps({"proto": PROTO_VERSION}).encode() + b"\n", deadline)
        line = self._read_line(deadline)
        try:
            reply = json.loads(line)
        except ValueError as e:
            raise ProtocolError(f"bad handshake reply {line!r}") from e
        if not isinstance(reply, dict) or reply.get("proto") != PROTO_VERSION:
            raise ProtocolError(f"unsupported handshake reply {reply!r}")
        dim = reply.get("dim")
        if not isinstance(dim, int) or dim < 1:
            raise ProtocolError(f"embedder advertised invalid dimension {dim!r}")
        self.dim = dim

    def embed(self, crop: ImageBuf) -> Embedding:
        with self._lock:
            if self._proc.poll() is not None:
                self._fail_eof()
            req_id = self._next_id
            self._next_id += 1
            deadline = _deadline(self.spec.timeout)
            px = crop.pixels
            header = _REQ_HEADER.pack(req_id, px.shape[1], px.shape[0], px.shape[2])
            self._write_all(header + px.tobytes(), deadline)
            resp = self._read_exact(_RESP_ID.size + 8 * self.dim, deadline)
            (got_id,) = _RESP_ID.unpack_from(resp)
            if got_id != req_id:
                raise ProtocolError(f"response id {got_id} does not match request {req_id}")
            vec = np.frombuffer(resp, dtype="<f8", offset=_RESP_ID.size).astype(np.float64)
            return Embedding(vec)

    # -- lifecycle ----------------------------------------------------------

    def _kill(self):
        if self._proc.poll() is None:
            self._proc.kill()
            self._proc.wait()
        self._close_pipes()

    def _close_pipes(self):
        for pipe in (self._proc.stdin, self._proc.stdout):
            try:
                pipe.close()
            except OSError:
                pass

    def close(self):
        """Close the child's stdin (shutdown signal) and reap it."""
        try:
            self._proc.stdin.close()
        except OSError:
            pass
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()
        self._close_pipes()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class _BuiltinEmbedder:
    """Session interface over a pure built-in spec (freely concurrent)."""

    def __init__(self, spec: EmbedderSpec):
        self.spec = spec

    def embed(self, crop: ImageBuf) -> Embedding:
        return embed(crop, self.spec)

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def make_embedder(spec: EmbedderSpec):
    """Open a session handle: ``.embed(ImageBuf) -> Embedding`` plus ``.close()``."""
    if isinstance(spec, ExternalSpec):
        return ExternalEmbedder(spec)
    return _BuiltinEmbedder(spec)


class EmbedderPool:
    """Fixed pool of embedder sessions, one handed to each worker at a time.

    Children are deterministic, so results are independent of which worker
    gets which session.
    """

    def __init__(self, spec: EmbedderSpec, size: int):
        import queue

        self._q = queue.Queue()
        self._all = []
        if isinstance(spec, ExternalSpec):
            for _ in range(max(1, size)):
                h = ExternalEmbedder(spec)
                self._all.append(h)
                self._q.put(h)
        else:
            h = _BuiltinEmbedder(spec)
            self._all.append(h)
            for _ in range(max(1, size)):
                self._q.put(h)

    def acquire(self):
        return self._q.get()

    def release(self, handle):
        self._q.put(handle)

    def close(self):
        for h in self._all:
            h.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
