"""Crop score functions and sliding score-map computation.

Two score families are provided:

* ``RandHashSpec`` -- exact integer dot product of the crop with a fixed
  random filter, reduced by a Euclidean modulo. Behaves like a hash of the
  crop contents: deterministic, but its maximum lands uniformly over crop
  positions.
* ``MexicanHatSpec`` -- dot product with a zero-sum Ricker (center-surround)
  kernel, evaluated at a cascade of decreasing standard deviations.

``compute_score_map`` scores every crop of an image in either translation
mode. The ``naive`` engine is the per-crop reference; the fast engines are
contract-checked against it (bit-identical for the integer hash, 1e-6
relative for the float kernels).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import signal

from .imagecore import CYCLIC, MODES, REALISTIC, LumaPlane

DEFAULT_MODULUS = (1 << 31) - 1
DEFAULT_SIGMAS = (50.0, 20.0, 9.0)

# Filter weights are clamped to [-508, 508] (4 sigma at the 127x quantization),
# so any score is bounded by 508*255*k^2; the int64 guard below follows.
_WEIGHT_CLAMP = 508
_MAX_CROP_FOR_INT64 = int(np.sqrt((1 << 62) / (_WEIGHT_CLAMP * 255)))


@dataclass(frozen=True)
class RandHashSpec:
    """Random-filter hash score: (filter . crop) mod modulus."""

    seed: int = 0
    modulus: int = DEFAULT_MODULUS

    def __post_init__(self):
        if self.modulus < 2:
            raise ValueError("modulus must be >= 2")
        if not 0 <= self.seed < (1 << 64):
            raise ValueError("seed must fit in 64 bits")


@dataclass(frozen=True)
class MexicanHatSpec:
    """Ricker-kernel score evaluated at strictly decreasing sigmas (pixels)."""

    sigmas: tuple[float, ...] = DEFAULT_SIGMAS

    def __post_init__(self):
        sig = tuple(float(s) for s in self.sigmas)
        if len(sig) == 0:
            raise ValueError("need at least one sigma")
        if any(s <= 0 for s in sig):
            raise ValueError("sigmas must be positive")
        if any(a <= b for a, b in zip(sig, sig[1:])):
            raise ValueError("sigmas must be strictly decreasing")
        object.__setattr__(self, "sigmas", sig)


ScoreFnSpec = Union[RandHashSpec, MexicanHatSpec]


@dataclass(frozen=True, eq=False)
class Filter:
    """A k-by-k score kernel: int32 weights (hash) or float64 weights (Ricker)."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError(f"filter must be square 2-D, got {w.shape}")
        w = np.ascontiguousarray(w)
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True, eq=False)
class ScoreMap:
    """Grid of crop scores: (H-k+1)^2 for realistic mode, H*W for cyclic."""

    scores: np.ndarray
    mode: str
    scale_index: Optional[int] = None

    def __post_init__(self):
        s = np.ascontiguousarray(self.scores)
        if s.ndim != 2:
            raise ValueError("score map must be 2-D")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        s.flags.writeable = False
        object.__setattr__(self, "scores", s)

    @property
    def rows(self) -> int:
        return self.scores.shape[0]

    @property
    def cols(self) -> int:
        return self.scores.shape[1]


# ---------------------------------------------------------------------------
# Filters
# ---------------------------------------------------------------------------

def make_randhash_filter(seed: int, k: int) -> Filter:
    """Fixed random filter: IID standard-normal draws quantized to integers.

    The PRNG is numpy's PCG64 seeded with ``seed``; draws are quantized as
    ``round(127*z)`` clamped to [-508, 508]. The same seed always yields the
    same filter (a frozen-value test guards the stream).
    """
    if k < 1:
        raise ValueError("filter size must be >= 1")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((k, k))
    w = np.clip(np.rint(127.0 * z), -_WEIGHT_CLAMP, _WEIGHT_CLAMP).astype(np.int32)
    return Filter(w)


def make_mexican_hat_kernel(sigma: float, k: int) -> Filter:
    """k-by-k Ricker kernel centered at ((k-1)/2, (k-1)/2), then zero-summed.

    psi(x, y) = (1 - r^2/(2 sigma^2)) * exp(-r^2/(2 sigma^2)), r^2 = x^2+y^2.
    The mean is subtracted so the kernel sums to zero, making scores
    invariant to constant luminance offsets.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if k < 1:
        raise ValueError("kernel size must be >= 1")
    ax = np.arange(k, dtype=np.float64) - (k - 1) / 2.0
    r2 = ax[:, None] ** 2 + ax[None, :] ** 2
    s2 = 2.0 * sigma * sigma
    psi = (1.0 - r2 / s2) * np.exp(-r2 / s2)
    psi -= psi.mean()
    return Filter(psi)


# ---------------------------------------------------------------------------
# Single-crop scores
# ---------------------------------------------------------------------------

def _as_plane(crop) -> np.ndarray:
    return crop.values if isinstance(crop, LumaPlane) else np.asarray(crop)


def score_randhash(crop, filt: Filter, modulus: int = DEFAULT_MODULUS) -> int:
    """Exact integer filter-crop dot product, reduced by Euclidean modulo.

    The result is always in [0, modulus). Arithmetic is exact; int64 cannot
    overflow for any crop smaller than ~8e6 pixels on a side (guarded).
    """
    x = _as_plane(crop)
    k = filt.size
    if x.shape != (k, k):
        raise ValueError(f"crop shape {x.shape} does not match filter {k}x{k}")
    if k > _MAX_CROP_FOR_INT64:
        raise ValueError(f"crop size {k} exceeds exact-arithmetic guard")
    s = int(np.dot(filt.weights.ravel().astype(np.int64), x.ravel().astype(np.int64)))
    return s % modulus


def score_mexican_hat(crop, filt: Filter) -> float:
    """Float64 dot product of the crop with a Ricker kernel."""
    x = _as_plane(crop)
    if x.shape != filt.weights.shape:
        raise ValueError(f"crop shape {x.shape} does not match filter {filt.size}x{filt.size}")
    return float(np.sum(filt.weights * x.astype(np.float64)))


# ---------------------------------------------------------------------------
# Score-map engines
# ---------------------------------------------------------------------------

def _wrap_pad(arr: np.ndarray, k: int) -> np.ndarray:
    return np.pad(arr, ((0, k - 1), (0, k - 1)), mode="wrap")


def _naive_randhash_map(values: np.ndarray, filt: Filter, modulus: int, mode: str) -> np.ndarray:
    k = filt.size
    src = _wrap_pad(values, k) if mode == CYCLIC else values
    rows = src.shape[0] - k + 1
    cols = src.shape[1] - k + 1
    w = filt.weights.ravel().astype(np.int64)
    out = np.empty((rows, cols), dtype=np.int64)
    for i in range(rows):
        for j in range(cols):
            win = src[i:i + k, j:j + k].astype(np.int64).ravel()
            out[i, j] = int(np.dot(w, win)) % modulus
    return out


def _integral_randhash_map(values: np.ndarray, filt: Filter, modulus: int, mode: str) -> np.ndarray:
    """Summed-area-table formulation; exact integers, bit-identical to naive.

    With P the zero-padded integral image and D the 2-D backward difference
    of the filter (support (k+1)x(k+1)), the sliding dot product equals the
    valid correlation of P with D. All arithmetic stays in int64 (the true
    score is bounded well inside the int64 range, so wraparound in partial
    sums cannot corrupt the result).
    """
    k = filt.size
    src = _wrap_pad(values, k) if mode == CYCLIC else values
    h, w = src.shape
    p = np.zeros((h + 1, w + 1), dtype=np.int64)
    np.cumsum(np.cumsum(src, axis=0, dtype=np.int64), axis=1, out=p[1:, 1:])
    wz = np.zeros((k + 2, k + 2), dtype=np.int64)
    wz[1:k + 1, 1:k + 1] = filt.weights
    d = wz[1:, 1:] - wz[:-1, 1:] - wz[1:, :-1] + wz[:-1, :-1]
    windows = np.lib.stride_tricks.sliding_window_view(p, (k + 1, k + 1))
    raw = np.einsum("ijab,ab->ij", windows, d, dtype=np.int64)
    return np.mod(raw, modulus)


def _naive_mh_map(values: np.ndarray, filt: Filter, mode: str) -> np.ndarray:
    k = filt.size
    src = _wrap_pad(values, k) if mode == CYCLIC else values
    rows = src.shape[0] - k + 1
    cols = src.shape[1] - k + 1
    kern = filt.weights
    srcf = src.astype(np.float64)
    out = np.empty((rows, cols), dtype=np.float64)
    for i in range(rows):
        for j in range(cols):
            out[i, j] = np.sum(kern * srcf[i:i + k, j:j + k])
    return out


def _separable_terms(kern: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    # Ricker kernels have exact rank 3 (two radial terms + the mean shift);
    # SVD recovers the decomposition to machine precision.
    u, s, vt = np.linalg.svd(kern)
    keep = s > s[0] * 1e-12 if s[0] > 0 else s > 0
    return [(u[:, t] * s[t], vt[t, :]) for t in np.nonzero(keep)[0]]


def _corr1_valid(arr: np.ndarray, w: np.ndarray, axis: int) -> np.ndarray:
    # out[.., j, ..] = sum_c w[c] * arr[.., j+c, ..]; entry value depends only
    # on the window contents (fixed summation order), so maps built from these
    # passes are content-pure.
    win = np.lib.stride_tricks.sliding_window_view(arr, w.size, axis=axis)
    return np.einsum("ijc,c->ij", win, w)


def _separable_mh_map(values: np.ndarray, filt: Filter, mode: str) -> np.ndarray:
    k = filt.size
    src = _wrap_pad(values, k) if mode == CYCLIC else values
    srcf = src.astype(np.float64)
    out = None
    for col, row in _separable_terms(filt.weights):
        part = _corr1_valid(_corr1_valid(srcf, row, axis=1), col, axis=0)
        out = part if out is None else out + part
    return out


def _fft_mh_map(values: np.ndarray, filt: Filter, mode: str) -> np.ndarray:
    kern = filt.weights
    srcf = values.astype(np.float64)
    if mode == REALISTIC:
        return signal.fftconvolve(srcf, kern[::-1, ::-1], mode="valid")
    h, w = srcf.shape
    kemb = np.zeros((h, w), dtype=np.float64)
    kemb[:kern.shape[0], :kern.shape[1]] = kern
    return np.fft.irfft2(np.fft.rfft2(srcf) * np.conj(np.fft.rfft2(kemb)), s=(h, w))


_RANDHASH_ENGINES = ("naive", "integral")
_MH_ENGINES = ("naive", "separable", "fft")

# Engines whose map entries are pure functions of the crop pixels (same
# contents -> bit-identical entry). Required for cyclic invariance and for
# deriving view maps by slicing the source map.
CONTENT_PURE_ENGINES = ("naive", "integral", "separable")


def default_engine(spec: ScoreFnSpec) -> str:
    return "integral" if isinstance(spec, RandHashSpec) else "separable"


def compute_score_map(
    luma: LumaPlane,
    spec: ScoreFnSpec,
    crop_size: int,
    mode: str = REALISTIC,
    engine: str = "auto",
    scale_index: int = 0,
) -> ScoreMap:
    """Score every crop of ``luma`` at one scale of ``spec``.

    Entry (i, j) is the score of the crop with top-left (i, j) in the given
    mode. For ``MexicanHatSpec``, ``scale_index`` picks the sigma. RandHash
    maps are exact integers for every engine; ``fft`` is rejected for
    RandHash because the modulo destroys approximate equality.
    """
    values = luma.values
    h, w = values.shape
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if crop_size < 1 or crop_size > min(h, w):
        raise ValueError(f"crop size {crop_size} invalid for {h}x{w} image")

    if isinstance(spec, RandHashSpec):
        if engine == "auto":
            engine = "integral"
        if engine not in _RANDHASH_ENGINES:
            raise ValueError(
                f"engine {engine!r} not supported for randhash scores "
                "(modulo arithmetic requires exact engines: naive, integral)"
            )
        filt = make_randhash_filter(spec.seed, crop_size)
        fn = _naive_randhash_map if engine == "naive" else _integral_randhash_map
        scores = fn(values, filt, spec.modulus, mode)
        return ScoreMap(scores, mode, None)

    if engine == "auto":
        engine = "separable"
    if engine not in _MH_ENGINES:
        raise ValueError(f"engine {engine!r} not supported for mexican-hat scores")
    if not 0 <= scale_index < len(spec.sigmas):
        raise ValueError(f"scale_index {scale_index} out of range")
    filt = make_mexican_hat_kernel(spec.sigmas[scale_index], crop_size)
    fn = {"naive": _naive_mh_map, "separable": _separable_mh_map, "fft": _fft_mh_map}[engine]
    return ScoreMap(fn(values, filt, mode), mode, scale_index)


def build_filter(spec: ScoreFnSpec, crop_size: int, scale_index: int = 0) -> Filter:
    """The concrete kernel used by ``compute_score_map`` for this spec/scale."""
    if isinstance(spec, RandHashSpec):
        return make_randhash_filter(spec.seed, crop_size)
    return make_mexican_hat_kernel(spec.sigmas[scale_index], crop_size)


# ---------------------------------------------------------------------------
# Debug exports
# ---------------------------------------------------------------------------

def scoremap_to_text(smap: ScoreMap) -> str:
    """PGM-style plain-text dump.

    Line 1: ``SCOREMAP <rows> <cols> <mode> <scale_index|->``; then one line
    per row of space-separated scores (full precision).
    """
    scale = "-" if smap.scale_index is None else str(smap.scale_index)
    lines = [f"SCOREMAP {smap.rows} {smap.cols} {smap.mode} {scale}"]
    for row in smap.scores:
        lines.append(" ".join(repr(v) for v in row.tolist()))
    return "\n".join(lines) + "\n"


def scoremap_to_csv(smap: ScoreMap) -> str:
    """Row-major CSV: header ``row,col,score`` then one line per entry."""
    lines = ["row,col,score"]
    for i in range(smap.rows):
        for j, v in enumerate(smap.scores[i].tolist()):
            lines.append(f"{i},{j},{v!r}")
    return "\n".join(lines) + "\n"
