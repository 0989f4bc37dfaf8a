"""Points of the hat process inside a small box are still uniform there.

Inside a box A whose left translate by eps is disjoint from it, the hat
points in A are exactly the original points in A together with the originals
from the translate, moved right.  The pooled sample tests as uniform; skipping
the move (the negative control) leaves a visible hole.
"""
from twincities import stats
from twincities.process import ProcessSpec, Stage
from twincities.stats import LocalUniformityParams, RegionQuery

spec = ProcessSpec(7, (Stage(0.2, 100, 0),))
box = RegionQuery(0.5, 0.3, 0.1, 0.1, container_side=0.5)

good = stats.twin_shift_uniformity_check(spec, 1, box, window=4000, reps=500)
bad = stats.twin_shift_uniformity_check(spec, 1, box, window=4000, reps=500, negative_control=True)
print(stats.report_to_json(good))
print(stats.report_to_json(bad))

p = LocalUniformityParams(alpha=0.5, M=0)
for eps, N in [(0.2, 100), (0.01, 5000)]:
    p = p.after_T(eps, N)
    print(f"after T(eps={eps}, N={N}): alpha = {p.alpha:.4g}, M = {p.M}")

fit = stats.variance_condition_fit(spec, 1, box, [200, 800, 3200], reps=200)
for row in fit["per_window"]:
    print(f"w = {row['w']:5d}  Var N(A) / w = {row['ratio']:.4f}")
