"""Closed-form shift-robustness bounds and their Monte-Carlo verifiers.

For an n-by-n view, k-by-k crops and shift radius ``delta`` (per-axis,
Chebyshev), the crop grid has side ``r = n - k + 1``. The grids of all views
within the radius share a ``r - 2*delta`` core out of a ``r + 2*delta``
union, giving the guaranteed adversarial robustness of a pseudo-random crop
selector; a single random shift of radius ``delta`` gives the consistency
analogue with ``delta`` in place of ``2*delta``. Numerators are clamped at
zero since probabilities cannot go negative.

``simulate_crop_agreement`` checks the counting argument two ways: an
ideal-uniform argmax sampler (converges to the closed form by construction)
and the real hash-score selection run on noise images, which includes the
NMS interior rule.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import stats

from .imagecore import REALISTIC, LumaPlane
from .scoring import RandHashSpec, ScoreMap, compute_score_map
from .selection import select_from_maps


@dataclass(frozen=True)
class BoundParams:
    """View side n, crop side k, shift radius delta (pixels)."""

    n: int
    k: int
    delta: int

    def __post_init__(self):
        if not 1 <= self.k <= self.n:
            raise ValueError(f"need 1 <= k <= n, got k={self.k}, n={self.n}")
        if self.delta < 0:
            raise ValueError("delta must be >= 0")


def _ratio_squared(r: int, spread: int) -> Fraction:
    num = max(0, r - spread)
    return Fraction(num, r + spread) ** 2 if num else Fraction(0)


def adv_robustness_bound_exact(p: BoundParams) -> Fraction:
    """Guaranteed adversarial robustness ((r - 2d) / (r + 2d))^2, clamped at 0."""
    return _ratio_squared(p.n - p.k + 1, 2 * p.delta)


def adv_robustness_bound(p: BoundParams) -> float:
    return float(adv_robustness_bound_exact(p))


def consistency_bound_exact(p: BoundParams) -> Fraction:
    """Guaranteed consistency ((r - d) / (r + d))^2, clamped at 0."""
    return _ratio_squared(p.n - p.k + 1, p.delta)


def consistency_bound(p: BoundParams) -> float:
    return float(consistency_bound_exact(p))


def bound_rows(n: int, k_values, deltas) -> list[dict]:
    """Rows (k, delta, adv_robustness_bound, consistency_bound) for CSV export."""
    rows = []
    for k in k_values:
        for d in deltas:
            p = BoundParams(n, k, d)
            rows.append(
                {
                    "k": k,
                    "delta": d,
                    "adv_robustness_bound": adv_robustness_bound(p),
                    "consistency_bound": consistency_bound(p),
                }
            )
    return rows


# ---------------------------------------------------------------------------
# Monte-Carlo verifiers
# ---------------------------------------------------------------------------

def _noise_luma(rng: np.random.Generator, h: int, w: int) -> LumaPlane:
    return LumaPlane(rng.integers(0, 256, (h, w), dtype=np.uint8))


def simulate_crop_agreement(
    p: BoundParams,
    trials: int,
    scorer: str = "ideal",
    seed: int = 0,
    scorer_seed: int = 0,
) -> float:
    """Fraction of trials in which every view inside the shift ball picks one crop.

    ``scorer="ideal"`` samples the argmax position uniformly over the union
    grid and reports the fraction landing in the shared core (the counting
    argument itself). ``scorer="randhash"`` draws an (n+2d)-by-(n+2d) noise
    source per trial, computes the real hash score map once, and runs the
    actual NMS selection for every view; agreement is judged in source
    coordinates. Per-trial seeds derive from (seed, trial), so results do not
    depend on how trials are partitioned.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    r = p.n - p.k + 1
    d = p.delta
    if scorer == "ideal":
        rng = np.random.default_rng([seed, 0])
        u = r + 2 * d
        pos = rng.integers(0, u, size=(trials, 2))
        inside = (pos >= 2 * d) & (pos <= r - 1)
        return float(np.mean(inside[:, 0] & inside[:, 1]))

    if scorer != "randhash":
        raise ValueError(f"unknown scorer {scorer!r}")
    spec = RandHashSpec(seed=scorer_seed)
    side = p.n + 2 * d
    agree = 0
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        luma = _noise_luma(rng, side, side)
        full = compute_score_map(luma, spec, p.k, REALISTIC, "integral").scores
        chosen = None
        ok = True
        for vy in range(2 * d + 1):
            for vx in range(2 * d + 1):
                sub = ScoreMap(full[vy:vy + r, vx:vx + r], REALISTIC, None)
                sel = select_from_maps(lambda s: sub, 1, False, p.k, p.n, p.n)
                at = (vy + sel.window.top, vx + sel.window.left)
                if chosen is None:
                    chosen = at
                elif at != chosen:
                    ok = False
                    break
            if not ok:
                break
        agree += ok
    return agree / trials


def argmax_uniformity(
    n: int,
    k: int,
    trials: int,
    seed: int = 0,
    scorer: str = "randhash",
    scorer_seed: int = 0,
) -> tuple[float, float]:
    """Chi-square test of the global score-map argmax against the uniform null.

    Draws IID uniform-noise images, records the argmax grid cell of the hash
    score map, and returns (statistic, p-value) over all (n-k+1)^2 cells.
    A pseudo-random score keeps the p-value away from 0; the ``constant``
    scorer is the degenerate anti-case (argmax always at the origin).
    """
    r = n - k + 1
    cells = r * r
    if cells == 1:
        return 0.0, 1.0
    if trials < 20 * cells:
        raise ValueError(f"insufficient trials: need >= {20 * cells} for {cells} cells")
    counts = np.zeros(cells, dtype=np.int64)
    spec = RandHashSpec(seed=scorer_seed)
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        luma = _noise_luma(rng, n, n)
        if scorer == "constant":
            counts[0] += 1
            continue
        if scorer != "randhash":
            raise ValueError(f"unknown scorer {scorer!r}")
        scores = compute_score_map(luma, spec, k, REALISTIC, "integral").scores
        counts[int(np.argmax(scores))] += 1
    stat, pvalue = stats.chisquare(counts)
    return float(stat), float(pvalue)
