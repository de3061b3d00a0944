"""Benchmark harness: gallery retrieval, consistency and adversarial robustness.

Outputs are compared through retrieval against a fixed gallery of labeled
embeddings, the way a foundation-model representation is judged: either the
top-1 retrieved id must match (``nn1``) or the K-NN majority label must
match (``class``). Retrieval for consistency/robustness excludes the query
image's own gallery entry, so the comparison is against the other images.

Estimators:

* ``consistency`` -- random shifts drawn from a Chebyshev shell of radius
  delta; fraction of draws whose output equals the unshifted output.
* ``adversarial_robustness`` -- exhaustive enumeration of the full
  (2*delta+1)^2 - 1 Chebyshev ball; an image counts as robust only if every
  shift leaves the output unchanged.

``run_experiment`` evaluates several pipelines over a dataset in one pass.
For crop-selection pipelines it computes each source's score maps once and
derives every view's map as a sub-window (realistic) or circular roll
(cyclic), which is bit-identical to scoring each view separately for the
content-pure engines; a property test pins that equality.
"""

from __future__ import annotations

import json
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .embedding import EmbedderPool, EmbedderSpec, Embedding, call_embedder
from .imagecore import (
    CYCLIC,
    MODES,
    REALISTIC,
    CropWindow,
    ImageBuf,
    Translation,
    extract_crop,
    to_luminance,
    translate_view,
    view_origin,
)
from .scoring import ScoreMap, compute_score_map, default_engine, CONTENT_PURE_ENGINES
from .selection import (
    OutputRecord,
    RicsConfig,
    SelectionResult,
    audit_record,
    center_crop_infer,
    center_window,
    rics_infer,
    score_variant_name,
    select_from_maps,
)

GEOMETRIES = ("ball", "shell", "corners")


@dataclass(frozen=True)
class MetricKind:
    """How two outputs are compared: top-1 retrieved id or K-NN majority label."""

    kind: str = "nn1"
    k: int = 1

    def __post_init__(self):
        if self.kind not in ("nn1", "class"):
            raise ValueError(f"unknown metric kind {self.kind!r}")
        if self.k < 1 or self.k % 2 == 0:
            raise ValueError("K must be odd and >= 1")


@dataclass(frozen=True)
class ShiftSet:
    """Integer shift set: Chebyshev ball / shell / diagonal corners of radius delta."""

    radius: int
    geometry: str = "ball"
    mode: str = REALISTIC

    def __post_init__(self):
        if self.radius < 1:
            raise ValueError("radius must be >= 1")
        if self.geometry not in GEOMETRIES:
            raise ValueError(f"unknown geometry {self.geometry!r}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")

    def shifts(self) -> list[tuple[int, int]]:
        """All (dy, dx) in the set, lexicographically ordered, (0, 0) excluded."""
        d = self.radius
        if self.geometry == "corners":
            out = [(-d, -d), (-d, d), (d, -d), (d, d)]
        else:
            out = [
                (dy, dx)
                for dy in range(-d, d + 1)
                for dx in range(-d, d + 1)
                if (dy, dx) != (0, 0)
                and (self.geometry == "ball" or max(abs(dy), abs(dx)) == d)
            ]
        return out


@dataclass(frozen=True)
class DatasetItem:
    id: str
    label: str
    image: ImageBuf


@dataclass(frozen=True)
class Pipeline:
    """A named inference pipeline: crop selection or the center-crop baseline."""

    name: str
    kind: str  # "rics" | "center"
    crop_size: int
    embedder: EmbedderSpec
    config: Optional[RicsConfig] = None
    mode: str = REALISTIC

    def __post_init__(self):
        if self.kind not in ("rics", "center"):
            raise ValueError(f"unknown pipeline kind {self.kind!r}")
        if self.kind == "rics":
            if self.config is None:
                raise ValueError("rics pipeline needs a RicsConfig")
            if self.config.mode != self.mode:
                raise ValueError("pipeline mode must match its RicsConfig mode")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def score_variant(self) -> str:
        return score_variant_name(self.config.score) if self.kind == "rics" else "center"

    def infer(self, view: ImageBuf, handle=None) -> OutputRecord:
        emb = handle if handle is not None else self.embedder
        if self.kind == "center":
            return center_crop_infer(view, self.crop_size, emb)
        return rics_infer(view, self.config, emb)


# ---------------------------------------------------------------------------
# Per-image view records (shared-map fast path)
# ---------------------------------------------------------------------------

def _fast_capable(pipeline: Pipeline) -> bool:
    if pipeline.kind != "rics":
        return True
    cfg = pipeline.config
    engine = cfg.engine if cfg.engine != "auto" else default_engine(cfg.score)
    return engine in CONTENT_PURE_ENGINES


def view_records(
    source: ImageBuf,
    view_size: int,
    shifts: Sequence[tuple[int, int]],
    pipeline: Pipeline,
    handle=None,
    fast: bool = True,
) -> dict[tuple[int, int], OutputRecord]:
    """OutputRecord of ``pipeline`` for each shifted view of one source image.

    With ``fast`` (and a content-pure engine) the source is scored once and
    each view's score map is taken as a sub-window / circular roll of the
    source map; results are bit-identical to per-view inference. Otherwise
    every view is materialized and inferred independently.
    """
    emb = handle if handle is not None else pipeline.embedder
    if not fast or not _fast_capable(pipeline):
        out = {}
        for dy, dx in shifts:
            view = translate_view(source, view_size, Translation(dx, dy, pipeline.mode))
            out[(dy, dx)] = pipeline.infer(view, handle)
        return out
    if pipeline.kind == "center":
        return _center_records(source, view_size, shifts, pipeline, emb)
    if pipeline.mode == REALISTIC:
        return _rics_records_realistic(source, view_size, shifts, pipeline, emb)
    return _rics_records_cyclic(source, view_size, shifts, pipeline, emb)


def _center_records(source, view_size, shifts, pipeline, emb):
    k = pipeline.crop_size
    out = {}
    off = (view_size - k) // 2
    h, w = source.height, source.width
    sel = SelectionResult(center_window(view_size, view_size, k), 0.0, None, False)
    for dy, dx in shifts:
        if pipeline.mode == REALISTIC:
            vy, vx = view_origin(h, w, view_size, Translation(dx, dy, REALISTIC))
            crop = ImageBuf(source.pixels[vy + off:vy + off + k, vx + off:vx + off + k])
        else:
            crop = extract_crop(source, CropWindow((off + dy) % h, (off + dx) % w, k, CYCLIC))
        out[(dy, dx)] = OutputRecord(embedding=call_embedder(crop, emb), selection=sel)
    return out


def _rics_records_realistic(source, view_size, shifts, pipeline, emb):
    cfg = pipeline.config
    k = cfg.crop_size
    luma = to_luminance(source)
    h, w = luma.height, luma.width
    full: list[Optional[ScoreMap]] = [None] * cfg.n_scales

    def full_map(s: int) -> ScoreMap:
        if full[s] is None:
            full[s] = compute_score_map(luma, cfg.score, k, REALISTIC, cfg.engine, scale_index=s)
        return full[s]

    rows = view_size - k + 1
    out = {}
    for dy, dx in shifts:
        vy, vx = view_origin(h, w, view_size, Translation(dx, dy, REALISTIC))

        def map_at(s: int) -> ScoreMap:
            sub = full_map(s).scores[vy:vy + rows, vx:vx + rows]
            return ScoreMap(sub, REALISTIC, full_map(s).scale_index)

        sel = select_from_maps(map_at, cfg.n_scales, cfg.cascades, k, view_size, view_size)
        top, left = vy + sel.window.top, vx + sel.window.left
        crop = ImageBuf(source.pixels[top:top + k, left:left + k])
        out[(dy, dx)] = OutputRecord(embedding=call_embedder(crop, emb), selection=sel)
    return out


def _rics_records_cyclic(source, view_size, shifts, pipeline, emb):
    cfg = pipeline.config
    k = cfg.crop_size
    if view_size != source.height or view_size != source.width:
        raise ValueError("cyclic mode requires view size == source size")
    luma = to_luminance(source)
    n = view_size
    base: list[Optional[ScoreMap]] = [None] * cfg.n_scales

    def base_map(s: int) -> ScoreMap:
        if base[s] is None:
            base[s] = compute_score_map(luma, cfg.score, k, CYCLIC, cfg.engine, scale_index=s)
        return base[s]

    out = {}
    for dy, dx in shifts:

        def map_at(s: int) -> ScoreMap:
            rolled = np.roll(np.roll(base_map(s).scores, -dy, axis=0), -dx, axis=1)
            return ScoreMap(rolled, CYCLIC, base_map(s).scale_index)

        sel = select_from_maps(map_at, cfg.n_scales, cfg.cascades, k, n, n)
        src_win = CropWindow((sel.window.top + dy) % n, (sel.window.left + dx) % n, k, CYCLIC)
        crop = extract_crop(source, src_win)
        out[(dy, dx)] = OutputRecord(embedding=call_embedder(crop, emb), selection=sel)
    return out


def selected_source_window(
    source: ImageBuf, view_size: int, shift: tuple[int, int], rec: OutputRecord, mode: str
) -> tuple[int, int]:
    """The selection's window origin in source coordinates (for crop agreement)."""
    dy, dx = shift
    if mode == REALISTIC:
        vy, vx = view_origin(source.height, source.width, view_size, Translation(dx, dy, REALISTIC))
        return vy + rec.selection.window.top, vx + rec.selection.window.left
    n = source.height
    return (rec.selection.window.top + dy) % n, (rec.selection.window.left + dx) % n


# ---------------------------------------------------------------------------
# Gallery and retrieval
# ---------------------------------------------------------------------------

class GalleryIndex:
    """Exact nearest-neighbor index over labeled embeddings."""

    def __init__(self, entries: Sequence[tuple[str, str, Embedding]], metric: str = "cosine"):
        if not entries:
            raise ValueError("gallery needs at least one entry")
        if metric not in ("cosine", "euclidean"):
            raise ValueError(f"unknown metric {metric!r}")
        ids = [str(e[0]) for e in entries]
        if len(set(ids)) != len(ids):
            dup = [i for i, c in Counter(ids).items() if c > 1]
            raise ValueError(f"duplicate gallery ids: {dup[:5]}")
        dims = {e[2].dim for e in entries}
        if len(dims) != 1:
            raise ValueError(f"inconsistent embedding dimensions {sorted(dims)}")
        self.ids = ids
        self.labels = [str(e[1]) for e in entries]
        self.matrix = np.stack([e[2].values for e in entries]).astype(np.float64)
        self.metric = metric
        self._norms = np.sqrt(np.einsum("ij,ij->i", self.matrix, self.matrix))
        safe = np.where(self._norms > 0, self._norms, 1.0)
        self._unit = self.matrix / safe[:, None]
        # rank of each row's id in sorted order, for deterministic tie-breaks
        order = sorted(range(len(ids)), key=lambda i: ids[i])
        self._id_rank = np.empty(len(ids), dtype=np.int64)
        for rank, row in enumerate(order):
            self._id_rank[row] = rank
        self._row_of_id = {i: r for r, i in enumerate(ids)}

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def distances(self, q: np.ndarray) -> np.ndarray:
        """Distance from query to every entry (cosine distance or L2).

        Cosine distance (1 - cos) is evaluated as half the squared chord
        between unit vectors, which is the same quantity but never negative
        and exactly 0.0 for a bit-identical vector. Zero-norm vectors (on
        either side) compare at distance 1.
        """
        q = np.asarray(q, dtype=np.float64)
        if q.shape != (self.dim,):
            raise ValueError(f"query dim {q.shape} != gallery dim {self.dim}")
        if self.metric == "cosine":
            # same reduction path as the row norms, so an identical vector
            # normalizes to identical bits and lands at distance exactly 0.0
            qn = np.sqrt(np.einsum("ij,ij->i", q[None, :], q[None, :]))[0]
            d = np.ones(len(self.ids), dtype=np.float64)
            if qn > 0:
                diff = self._unit - q / qn
                ok = self._norms > 0
                d[ok] = 0.5 * np.einsum("ij,ij->i", diff, diff)[ok]
            return d
        diff = self.matrix - q
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def build_gallery(
    items: Sequence[DatasetItem],
    pipeline: Pipeline,
    view_size: int,
    metric: str = "cosine",
    handle=None,
) -> GalleryIndex:
    """Embed every item's base (unshifted) view with the pipeline and index it."""
    entries = []
    for item in items:
        try:
            view = translate_view(item.image, view_size, Translation(0, 0, pipeline.mode))
            rec = pipeline.infer(view, handle)
        except Exception as e:
            raise RuntimeError(f"gallery embedding failed for id={item.id!r}: {e}") from e
        entries.append((item.id, item.label, rec.embedding))
    return GalleryIndex(entries, metric)


def _ordered_candidates(g: GalleryIndex, d: np.ndarray, k: int) -> list[int]:
    if k >= len(g.ids):
        pool = np.arange(len(g.ids))
    else:
        pool = np.argpartition(d, k)[: max(k + 8, k)]
    pool = sorted(pool.tolist(), key=lambda r: (d[r], g.ids[r]))
    return pool[:k]


def nn_lookup(
    g: GalleryIndex, q, k: int = 1, exclude_id: Optional[str] = None
) -> list[tuple[str, str, float]]:
    """Exact K nearest entries as (id, label, distance), ties broken by smaller id."""
    qv = q.values if isinstance(q, Embedding) else np.asarray(q, dtype=np.float64)
    avail = len(g.ids) - (1 if exclude_id in g._row_of_id else 0)
    if k > avail:
        raise ValueError(f"K={k} exceeds {avail} available entries")
    d = g.distances(qv)
    if exclude_id in g._row_of_id:
        d = d.copy()
        d[g._row_of_id[exclude_id]] = np.inf
    rows = _ordered_candidates(g, d, k)
    return [(g.ids[r], g.labels[r], float(d[r])) for r in rows]


def knn_majority_label(
    g: GalleryIndex, q, k: int = 1, exclude_id: Optional[str] = None
) -> str:
    """Majority label of the K nearest entries.

    Majority ties are broken by the tied label with the nearest member, then
    by the smaller label string.
    """
    hits = nn_lookup(g, q, k, exclude_id)
    counts = Counter(label for _, label, _ in hits)
    top = max(counts.values())
    tied = [label for label, c in counts.items() if c == top]
    if len(tied) == 1:
        return tied[0]
    best = {label: min(d for _, lab, d in hits if lab == label) for label in tied}
    return min(tied, key=lambda label: (best[label], label))


def retrieval_token(
    g: GalleryIndex, rec: OutputRecord, metric: MetricKind, exclude_id: Optional[str] = None
) -> str:
    """The comparison token of an output: retrieved id (nn1) or K-NN label (class)."""
    if metric.kind == "nn1":
        return nn_lookup(g, rec.embedding, 1, exclude_id)[0][0]
    return knn_majority_label(g, rec.embedding, metric.k, exclude_id)


def outputs_equal(
    a: OutputRecord,
    b: OutputRecord,
    metric: MetricKind,
    g: GalleryIndex,
    exclude_id: Optional[str] = None,
) -> bool:
    """Whether two outputs agree under the metric (same retrieved id / label)."""
    return retrieval_token(g, a, metric, exclude_id) == retrieval_token(g, b, metric, exclude_id)


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------

def _consistency_draws(rng: np.random.Generator, cells, samples: int):
    idx = rng.integers(0, len(cells), size=samples)
    return [cells[i] for i in idx]


def consistency(
    dataset: Sequence[DatasetItem],
    pipeline: Pipeline,
    view_size: int,
    shift: ShiftSet,
    metric: MetricKind,
    g: GalleryIndex,
    samples_per_image: int,
    seed: int = 0,
    handle=None,
    fast: bool = True,
) -> float:
    """Probability that a random shift from the set leaves the output unchanged.

    Per image, ``samples_per_image`` shifts are drawn uniformly from the set
    (seeded by (seed, image index, radius); reproducible and independent of
    worker partitioning). The query image's own gallery entry is excluded
    from retrieval.
    """
    cells = shift.shifts()
    succ = total = 0
    for idx, item in enumerate(dataset):
        rng = np.random.default_rng([seed, idx, shift.radius])
        draws = _consistency_draws(rng, cells, samples_per_image)
        uniq = sorted(set(draws) | {(0, 0)})
        recs = view_records(item.image, view_size, uniq, pipeline, handle, fast)
        excl = item.id if item.id in g._row_of_id else None
        toks = {s: retrieval_token(g, recs[s], metric, excl) for s in uniq}
        base = toks[(0, 0)]
        for s in draws:
            succ += toks[s] == base
            total += 1
    return succ / total


def adversarial_robustness(
    dataset: Sequence[DatasetItem],
    pipeline: Pipeline,
    view_size: int,
    shift: ShiftSet,
    metric: MetricKind,
    g: GalleryIndex,
    handle=None,
    fast: bool = True,
) -> float:
    """Fraction of images whose output survives EVERY shift in the ball.

    Exhaustive worst-case enumeration: one changed output anywhere in the
    (2*delta+1)^2 - 1 ball marks the image as broken.
    """
    cells = shift.shifts()
    robust = 0
    for item in dataset:
        recs = view_records(item.image, view_size, [(0, 0)] + cells, pipeline, handle, fast)
        excl = item.id if item.id in g._row_of_id else None
        base = retrieval_token(g, recs[(0, 0)], metric, excl)
        robust += all(retrieval_token(g, recs[s], metric, excl) == base for s in cells)
    return robust / len(dataset)


def accuracy(
    dataset: Sequence[DatasetItem],
    pipeline: Pipeline,
    view_size: int,
    g: GalleryIndex,
    k: int = 1,
    handle=None,
    exclude_self: bool = True,
) -> float:
    """K-NN classification accuracy on base views.

    When the dataset is part of the gallery (matched by id), self-matches are
    excluded unless ``exclude_self`` is turned off.
    """
    labels = set(g.labels)
    unknown = [it.label for it in dataset if it.label not in labels]
    if unknown:
        raise ValueError(f"dataset labels not in gallery label space: {sorted(set(unknown))[:5]}")
    hits = 0
    for item in dataset:
        view = translate_view(item.image, view_size, Translation(0, 0, pipeline.mode))
        rec = pipeline.infer(view, handle)
        excl = item.id if (exclude_self and item.id in g._row_of_id) else None
        hits += knn_majority_label(g, rec.embedding, k, excl) == item.label
    return hits / len(dataset)


def crop_agreement_rate(
    dataset: Sequence[DatasetItem],
    pipeline: Pipeline,
    view_size: int,
    shift: ShiftSet,
    handle=None,
    fast: bool = True,
) -> float:
    """Fraction of images for which every view in the ball selects the same
    physical (source-coordinate) crop. Crop agreement implies output
    agreement, so this lower-bounds adversarial robustness."""
    cells = [(0, 0)] + shift.shifts()
    agree = 0
    for item in dataset:
        recs = view_records(item.image, view_size, cells, pipeline, handle, fast)
        wins = {selected_source_window(item.image, view_size, s, recs[s], pipeline.mode) for s in cells}
        agree += len(wins) == 1
    return agree / len(dataset)


# ---------------------------------------------------------------------------
# Experiment orchestration
# ---------------------------------------------------------------------------

@dataclass
class ExperimentSettings:
    view_size: int
    deltas: list[int]
    metrics: list[MetricKind]
    pipelines: list[Pipeline]
    mode: str = REALISTIC
    consistency_geometry: str = "shell"
    samples_per_image: int = 40
    gallery_metric: str = "cosine"
    knn_k: int = 1
    seed: int = 0
    workers: int = 1
    fast: bool = True

    def __post_init__(self):
        if not self.deltas or any(d < 1 for d in self.deltas):
            raise ValueError("deltas must be positive")
        if self.consistency_geometry not in ("shell", "corners"):
            raise ValueError("consistency geometry must be shell or corners")
        if len({p.name for p in self.pipelines}) != len(self.pipelines):
            raise ValueError("pipeline names must be unique")


@dataclass
class RobustnessReport:
    """Per-(pipeline, metric, delta) rates plus accuracy, Table-style."""

    pipelines: list[str]
    metrics: list[str]
    deltas: list[int]
    mode: str
    accuracy: dict
    cells: dict  # cells[pipeline][metric][delta] = {adv_rob, consistency, ...}
    counts: dict
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "pipelines": self.pipelines,
            "metrics": self.metrics,
            "deltas": self.deltas,
            "mode": self.mode,
            "accuracy": self.accuracy,
            "cells": {
                p: {m: {str(d): self.cells[p][m][d] for d in self.deltas} for m in self.metrics}
                for p in self.pipelines
            },
            "counts": self.counts,
            "config": self.config,
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    def csv_columns(self) -> list[str]:
        cols = ["pipeline", "accuracy"]
        for m in self.metrics:
            cols += [f"adv_rob_{m}_d{d}" for d in self.deltas]
        for m in self.metrics:
            cols += [f"consistency_{m}_d{d}" for d in self.deltas]
        return cols

    def to_csv(self) -> str:
        """Stable schema: one row per pipeline; adversarial column groups then
        consistency groups, each metric-major then delta."""
        lines = [",".join(self.csv_columns())]
        for p in self.pipelines:
            vals = [p, f"{self.accuracy[p]:.6f}"]
            for m in self.metrics:
                vals += [f"{self.cells[p][m][d]['adv_rob']:.6f}" for d in self.deltas]
            for m in self.metrics:
                vals += [f"{self.cells[p][m][d]['consistency']:.6f}" for d in self.deltas]
            lines.append(",".join(vals))
        return "\n".join(lines) + "\n"


def _image_pass(item: DatasetItem, idx: int, settings: ExperimentSettings, pools) -> dict:
    """Per-image parallel work: all view records for every pipeline."""
    max_d = max(settings.deltas)
    ball = ShiftSet(max_d, "ball", settings.mode).shifts()
    needed = [(0, 0)] + ball
    out = {}
    for pipe in settings.pipelines:
        pool = pools[pipe.name]
        handle = pool.acquire()
        try:
            recs = view_records(item.image, settings.view_size, needed, pipe, handle, settings.fast)
        except Exception as e:
            raise RuntimeError(f"evaluation failed for id={item.id!r} pipeline={pipe.name!r}: {e}") from e
        finally:
            pool.release(handle)
        out[pipe.name] = recs
    return out


def run_experiment(dataset: Sequence[DatasetItem], settings: ExperimentSettings):
    """Evaluate all pipelines; returns (RobustnessReport, audit_lines).

    Deterministic for fixed settings: sampling seeds derive from the master
    seed and image index, and reductions are ordered by image index, so the
    output is identical for any worker count.
    """
    if not dataset:
        raise ValueError("empty dataset")
    ids = [it.id for it in dataset]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate dataset ids")

    pools = {p.name: EmbedderPool(p.embedder, settings.workers) for p in settings.pipelines}
    try:
        bundles: list[Optional[dict]] = [None] * len(dataset)
        if settings.workers <= 1:
            for i, item in enumerate(dataset):
                bundles[i] = _image_pass(item, i, settings, pools)
        else:
            with ThreadPoolExecutor(max_workers=settings.workers) as ex:
                futures = {
                    ex.submit(_image_pass, item, i, settings, pools): i
                    for i, item in enumerate(dataset)
                }
                for fut in futures:
                    bundles[futures[fut]] = fut.result()
    finally:
        for pool in pools.values():
            pool.close()

    # galleries from base-view records
    galleries = {}
    for pipe in settings.pipelines:
        entries = [
            (item.id, item.label, bundles[i][pipe.name][(0, 0)].embedding)
            for i, item in enumerate(dataset)
        ]
        galleries[pipe.name] = GalleryIndex(entries, settings.gallery_metric)

    # retrieval tokens and cell reductions (serial, deterministic)
    metric_names = [m.kind for m in settings.metrics]
    acc = {}
    cells = {
        p.name: {
            m.kind: {
                d: {"adv_rob": 0, "consistency": 0, "adv_images": 0, "consistency_samples": 0}
                for d in settings.deltas
            }
            for m in settings.metrics
        }
        for p in settings.pipelines
    }
    acc_hits = {p.name: 0 for p in settings.pipelines}
    audit = []

    for pipe in settings.pipelines:
        g = galleries[pipe.name]
        for i, item in enumerate(dataset):
            recs = bundles[i][pipe.name]
            excl = item.id
            toks = {
                m.kind: {s: retrieval_token(g, rec, m, excl) for s, rec in recs.items()}
                for m in settings.metrics
            }
            pred = knn_majority_label(g, recs[(0, 0)].embedding, settings.knn_k, excl)
            acc_hits[pipe.name] += pred == item.label
            for m in settings.metrics:
                tok = toks[m.kind]
                base = tok[(0, 0)]
                for d in settings.deltas:
                    ball = ShiftSet(d, "ball", settings.mode).shifts()
                    cell = cells[pipe.name][m.kind][d]
                    cell["adv_rob"] += all(tok[s] == base for s in ball)
                    cell["adv_images"] += 1
                    cons_cells = ShiftSet(d, settings.consistency_geometry, settings.mode).shifts()
                    rng = np.random.default_rng([settings.seed, i, d])
                    for s in _consistency_draws(rng, cons_cells, settings.samples_per_image):
                        cell["consistency"] += tok[s] == base
                        cell["consistency_samples"] += 1
            audit.append(
                audit_record(item.id, settings.mode, pipe.crop_size, pipe.score_variant, recs[(0, 0)])
            )
        acc[pipe.name] = acc_hits[pipe.name] / len(dataset)

    for p in settings.pipelines:
        for m in settings.metrics:
            for d in settings.deltas:
                cell = cells[p.name][m.kind][d]
                cell["adv_rob"] = cell["adv_rob"] / cell["adv_images"]
                cell["consistency"] = cell["consistency"] / cell["consistency_samples"]

    report = RobustnessReport(
        pipelines=[p.name for p in settings.pipelines],
        metrics=metric_names,
        deltas=list(settings.deltas),
        mode=settings.mode,
        accuracy=acc,
        cells=cells,
        counts={"images": len(dataset), "gallery": len(dataset)},
    )
    return report, audit
