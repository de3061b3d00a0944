"""
Monte-Carlo verification of the counting argument
=================================================

Two checks behind the closed-form floors: the score-map argmax of the hash
score is uniform over crop positions (chi-square), and the fraction of
noise images whose views all pick one crop tracks the area ratio.
"""

from rics import BoundParams, adv_robustness_bound, argmax_uniformity, simulate_crop_agreement

# uniformity: 121 cells, 3000 trials (the acceptance suite runs 441 cells
# at 100k trials; this is the pocket edition)
stat, p = argmax_uniformity(n=30, k=20, trials=3000, seed=0)
print(f"argmax uniformity: chi2={stat:.1f}, p={p:.3f} -> {'not rejected' if p > 1e-3 else 'REJECTED'}")

stat, p = argmax_uniformity(n=30, k=20, trials=3000, seed=0, scorer="constant")
print(f"degenerate anti-case: chi2={stat:.1f}, p={p:.2e} -> must be rejected")

# agreement: ideal sampler converges to the ratio; the real hash selection
# lands close, a little below it at small grids (the NMS interior rule
# spends one cell per border)
p1 = BoundParams(64, 32, 1)
ideal = simulate_crop_agreement(p1, 50_000, "ideal", seed=0)
real = simulate_crop_agreement(p1, 2_000, "randhash", seed=0)
print(f"\nclosed form {adv_robustness_bound(p1):.4f}")
print(f"ideal-uniform sampler {ideal:.4f}")
print(f"hash-score selection on noise {real:.4f}")
