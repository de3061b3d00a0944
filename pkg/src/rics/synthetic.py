"""Deterministic synthetic corpora for the shift benchmark.

Every family keeps the class-identifying content inside a centered box that
stays fully visible in every view shifted by up to ``max_shift`` pixels, so
no translation can push the object out of frame. All pixels derive from
seeded generators: the same spec always produces a byte-identical corpus.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .evaluation import DatasetItem
from .imagecore import ImageBuf, load_image, save_pnm

FAMILIES = ("noise", "noise-plus-object", "blocks", "blobs")

_CLASS_KEY = 0xC1A55
_BLOB_KEY = 0xB10B5


@dataclass(frozen=True)
class SyntheticSpec:
    classes: int = 2
    per_class: int = 10
    family: str = "noise-plus-object"
    seed: int = 0
    size: int = 256
    view_size: int = 224
    max_shift: int = 9

    def __post_init__(self):
        if self.classes < 1 or self.per_class < 1:
            raise ValueError("classes and per_class must be >= 1")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r} (choose from {FAMILIES})")
        if not 1 <= self.view_size <= self.size:
            raise ValueError("need 1 <= view_size <= size")
        if self.max_shift < 0 or self.size - self.view_size < 2 * self.max_shift:
            raise ValueError("need size - view_size >= 2*max_shift")
        if self.family != "noise" and self.view_size - 2 * self.max_shift < 8:
            raise ValueError("object families need view_size - 2*max_shift >= 8")


def object_box(spec: SyntheticSpec):
    """(top, left, side) of the class-content box, or None for pure noise.

    The box is centered and no wider than ``view_size - 2*max_shift``, which
    makes it a subset of every view within the shift budget.
    """
    if spec.family == "noise":
        return None
    side = max(8, (spec.view_size - 2 * spec.max_shift) // 2)
    top = (spec.size - side) // 2
    return top, top, side


def _class_bands(classes: int, ci: int) -> tuple[int, int]:
    lo = (ci * 256) // classes
    hi = ((ci + 1) * 256) // classes - 1
    return lo, hi


def _tile_pattern(spec: SyntheticSpec, ci: int, side: int) -> np.ndarray:
    crng = np.random.default_rng([spec.seed, _CLASS_KEY, ci])
    tile = crng.integers(0, 256, (8, 8, 3), dtype=np.uint8)
    reps = -(-side // 8)
    return np.tile(tile, (reps, reps, 1))[:side, :side]


def _render(spec: SyntheticSpec, ci: int, ii: int) -> np.ndarray:
    rng = np.random.default_rng([spec.seed, ci, ii])
    n = spec.size
    if spec.family == "noise":
        return rng.integers(0, 256, (n, n, 3), dtype=np.uint8)

    top, left, side = object_box(spec)
    if spec.family == "noise-plus-object":
        arr = rng.integers(0, 256, (n, n, 3), dtype=np.uint8)
        arr[top:top + side, left:left + side] = _tile_pattern(spec, ci, side)
        return arr

    if spec.family == "blocks":
        lo, hi = _class_bands(spec.classes, ci)
        tiles = -(-n // 16)
        colors = rng.integers(lo, hi + 1, (tiles, tiles, 3), dtype=np.int64)
        arr = np.repeat(np.repeat(colors, 16, axis=0), 16, axis=1)[:n, :n]
        return arr.astype(np.uint8)

    # blobs: class-keyed constellation of soft color bumps on a gray field
    crng = np.random.default_rng([spec.seed, _BLOB_KEY, ci])
    n_blobs = 3 + ci % 3
    rel = crng.uniform(0.2, 0.8, (n_blobs, 2))
    radii = crng.uniform(side / 10.0, side / 5.0, n_blobs)
    amps = crng.uniform(-100.0, 100.0, (n_blobs, 3))
    field = np.full((n, n, 3), 128.0)
    field += rng.uniform(-8.0, 8.0, (n, n, 3))
    yy, xx = np.mgrid[0:n, 0:n]
    jitter = rng.integers(-2, 3, (n_blobs, 2))
    for b in range(n_blobs):
        cy = top + rel[b, 0] * side + jitter[b, 0]
        cx = left + rel[b, 1] * side + jitter[b, 1]
        g = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * radii[b] ** 2))
        field += g[:, :, None] * amps[b]
    return np.clip(np.rint(field), 0, 255).astype(np.uint8)


def item_id(ci: int, ii: int) -> str:
    return f"c{ci:02d}i{ii:04d}"


def generate_dataset(spec: SyntheticSpec) -> list[DatasetItem]:
    """All items in (class, index) order; byte-identical for equal specs."""
    items = []
    for ci in range(spec.classes):
        label = f"class{ci:02d}"
        for ii in range(spec.per_class):
            items.append(DatasetItem(item_id(ci, ii), label, ImageBuf(_render(spec, ci, ii))))
    return items


def write_dataset(spec: SyntheticSpec, out_dir) -> Path:
    """Write PPM files plus a JSON-lines manifest; returns the manifest path.

    Manifest lines are ``{"id": ..., "label": ..., "path": ...}`` with paths
    relative to the manifest directory.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = out / "manifest.jsonl"
    with open(manifest, "w") as f:
        for item in generate_dataset(spec):
            name = f"{item.id}.ppm"
            save_pnm(item.image, out / name)
            f.write(json.dumps({"id": item.id, "label": item.label, "path": name}) + "\n")
    return manifest


def load_manifest(path) -> list[DatasetItem]:
    """Load a JSON-lines manifest; image paths resolve relative to it."""
    path = Path(path)
    base = path.parent
    items = []
    seen = set()
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            for key in ("id", "label", "path"):
                if key not in doc:
                    raise ValueError(f"{path}:{lineno}: manifest line missing {key!r}")
            if doc["id"] in seen:
                raise ValueError(f"{path}:{lineno}: duplicate id {doc['id']!r}")
            seen.add(doc["id"])
            items.append(DatasetItem(str(doc["id"]), str(doc["label"]), load_image(base / doc["path"])))
    if not items:
        raise ValueError(f"{path}: empty manifest")
    return items
