"""
Closed-form robustness floors
=============================

The guaranteed rates of a pseudo-random crop selector, as functions of the
crop size and the shift radius. Bigger crops leave fewer grid positions, so
the floors fall; the CSV is plot-ready.
"""

from rics import BoundParams, adv_robustness_bound, bound_rows, consistency_bound

n = 224
print(f"view {n}, crop 140:")
for d in (1, 3, 5, 9):
    p = BoundParams(n, 140, d)
    print(
        f"  radius {d}: adversarial >= {adv_robustness_bound(p):.4f}, "
        f"consistency >= {consistency_bound(p):.4f}"
    )

rows = bound_rows(n, range(100, 201, 20), [1, 5])
print("\nk,delta,adv_robustness_bound,consistency_bound")
for r in rows:
    print(f"{r['k']},{r['delta']},{r['adv_robustness_bound']:.6f},{r['consistency_bound']:.6f}")

# the same table is available from the command line:
#   rics bounds --n 224 --k-min 100 --k-max 200 --k-step 20 --deltas 1,5
