"""Crop selection: NMS over score maps, scale cascade, and the inference wrapper.

The selection rule, applied per score map:

1. keep strict 8-neighbor local maxima (interior cells only in realistic
   mode; toroidal neighbors with no edge exclusion in cyclic mode);
2. pick the candidate with the maximal score, ties broken by smallest
   (row, col);
3. if no candidate exists, fall back to the next smaller kernel scale
   (Mexican-Hat cascade) and finally to the center window.

``rics_infer`` scores on luminance, then embeds the same window cut from
the full-color view.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .embedding import EmbedderError, EmbedderSpec, Embedding, call_embedder
from .imagecore import (
    MODES,
    REALISTIC,
    CropWindow,
    GeometryError,
    ImageBuf,
    LumaPlane,
    extract_crop,
    to_luminance,
)
from .scoring import MexicanHatSpec, RandHashSpec, ScoreFnSpec, ScoreMap, compute_score_map

FALLBACK_POLICY = "scale-cascade-then-center"


@dataclass(frozen=True)
class RicsConfig:
    """Configuration of the crop-selection wrapper."""

    crop_size: int = 140
    score: ScoreFnSpec = RandHashSpec()
    mode: str = REALISTIC
    engine: str = "auto"
    fallback: str = FALLBACK_POLICY

    def __post_init__(self):
        if self.crop_size < 3:
            raise ValueError("crop_size must be >= 3 (NMS needs an interior)")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.fallback != FALLBACK_POLICY:
            raise ValueError(f"unsupported fallback policy {self.fallback!r}")

    @property
    def n_scales(self) -> int:
        return len(self.score.sigmas) if isinstance(self.score, MexicanHatSpec) else 1

    @property
    def cascades(self) -> bool:
        return isinstance(self.score, MexicanHatSpec)


@dataclass(frozen=True)
class SelectionResult:
    """The chosen window plus how it was chosen."""

    window: CropWindow
    score: Union[int, float]
    scale_index: Optional[int]
    used_fallback: bool


@dataclass(frozen=True)
class OutputRecord:
    """Embedding of the selected crop, with the selection kept for audit."""

    embedding: Embedding
    selection: SelectionResult
    predicted_label: Optional[str] = None


def nms_candidates(smap: ScoreMap) -> np.ndarray:
    """Grid positions whose score strictly exceeds all 8 neighbors.

    Realistic maps exclude a 1-cell border (a peak must not sit at the edge);
    cyclic maps wrap, so every position is interior. Returns an (M, 2) array
    of (row, col) in lexicographic order; plateaus yield no candidates.
    """
    s = smap.scores
    if smap.mode == REALISTIC:
        if s.shape[0] < 3 or s.shape[1] < 3:
            raise GeometryError(f"score map {s.shape} too small for interior NMS (need 3x3)")
        c = s[1:-1, 1:-1]
        m = (
            (c > s[:-2, :-2]) & (c > s[:-2, 1:-1]) & (c > s[:-2, 2:])
            & (c > s[1:-1, :-2]) & (c > s[1:-1, 2:])
            & (c > s[2:, :-2]) & (c > s[2:, 1:-1]) & (c > s[2:, 2:])
        )
        ii, jj = np.nonzero(m)
        ii, jj = ii + 1, jj + 1
    else:
        m = np.ones(s.shape, dtype=bool)
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dy or dx:
                    m &= s > np.roll(np.roll(s, dy, axis=0), dx, axis=1)
        ii, jj = np.nonzero(m)
    return np.stack([ii, jj], axis=1).astype(np.int64)


def _native(v):
    return int(v) if isinstance(v, (int, np.integer)) else float(v)


def select_from_maps(
    map_at: Callable[[int], ScoreMap],
    n_scales: int,
    cascades: bool,
    crop_size: int,
    height: int,
    width: int,
) -> SelectionResult:
    """Run the selection rule over lazily supplied per-scale score maps.

    ``map_at(s)`` must return the score map for scale ``s`` of an
    ``height`` x ``width`` image. Shared by direct inference, the batch
    evaluator, and the Monte-Carlo verifiers so they cannot drift apart.
    """
    mode = None
    first_map = None
    for s in range(n_scales):
        smap = map_at(s)
        if first_map is None:
            first_map, mode = smap, smap.mode
        cands = nms_candidates(smap)
        if cands.shape[0]:
            vals = smap.scores[cands[:, 0], cands[:, 1]]
            best = int(np.argmax(vals))  # first max in lexicographic order
            i, j = int(cands[best, 0]), int(cands[best, 1])
            return SelectionResult(
                window=CropWindow(i, j, crop_size, mode),
                score=_native(smap.scores[i, j]),
                scale_index=s if cascades else None,
                used_fallback=False,
            )
    ci, cj = (height - crop_size) // 2, (width - crop_size) // 2
    return SelectionResult(
        window=CropWindow(ci, cj, crop_size, mode),
        score=_native(first_map.scores[ci, cj]),
        scale_index=None,
        used_fallback=True,
    )


def select_crop(luma: LumaPlane, cfg: RicsConfig) -> SelectionResult:
    """Select the crop of ``luma`` per the configured score function."""
    k = cfg.crop_size
    if k > min(luma.height, luma.width):
        raise GeometryError(f"crop size {k} exceeds image {luma.height}x{luma.width}")

    def map_at(s: int) -> ScoreMap:
        return compute_score_map(luma, cfg.score, k, cfg.mode, cfg.engine, scale_index=s)

    return select_from_maps(map_at, cfg.n_scales, cfg.cascades, k, luma.height, luma.width)


def rics_infer(view: ImageBuf, cfg: RicsConfig, embedder: EmbedderSpec) -> OutputRecord:
    """Full wrapper: select on luminance, embed the color crop at that window."""
    luma = to_luminance(view)
    sel = select_crop(luma, cfg)
    crop = extract_crop(view, sel.window)
    try:
        emb = call_embedder(crop, embedder)
    except EmbedderError as e:
        raise type(e)(
            f"{e} (embedding crop top={sel.window.top} left={sel.window.left} k={sel.window.size})"
        ) from e
    return OutputRecord(embedding=emb, selection=sel)


def center_window(height: int, width: int, crop_size: int, mode: str = REALISTIC) -> CropWindow:
    return CropWindow((height - crop_size) // 2, (width - crop_size) // 2, crop_size, mode)


def center_crop_infer(view: ImageBuf, crop_size: int, embedder: EmbedderSpec) -> OutputRecord:
    """Baseline pipeline: embed the fixed center window (no score, no NMS)."""
    win = center_window(view.height, view.width, crop_size)
    crop = extract_crop(view, win)
    emb = call_embedder(crop, embedder)
    sel = SelectionResult(window=win, score=0.0, scale_index=None, used_fallback=False)
    return OutputRecord(embedding=emb, selection=sel)


def audit_record(image_id: str, mode: str, crop_size: int, score_variant: str, rec: OutputRecord) -> dict:
    """One audit-log entry per inference (serialized as a JSON line)."""
    sel = rec.selection
    return {
        "image_id": image_id,
        "mode": mode,
        "k": crop_size,
        "score_variant": score_variant,
        "window": {"top": sel.window.top, "left": sel.window.left},
        "scale_index": sel.scale_index,
        "used_fallback": sel.used_fallback,
    }


def score_variant_name(spec_or_kind) -> str:
    if isinstance(spec_or_kind, RandHashSpec):
        return "randhash"
    if isinstance(spec_or_kind, MexicanHatSpec):
        return "mexican_hat"
    return str(spec_or_kind)
