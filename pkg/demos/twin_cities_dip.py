"""Doubling every point at a tiny offset barely lengthens the shortest path.

Sample one block of the hat process: N iid points followed by the same
points moved right by eps.  The 2N-point path costs about the same as the
N-point path, so its ratio L / sqrt(n) drops by roughly 1/sqrt(2).
"""
import math

import numpy as np

from twincities import process, tsp
from twincities.process import ProcessSpec, Stage
from twincities.torus import Metric

N = 5000
spec = ProcessSpec(2024, (Stage(1e-4, N, 0),))

pts = process.segment(spec, 1, 0, 2 * N - 1)
first, twins = pts[:N], pts[N:]
print("first three points and their twins")
for p, q in zip(first[:3], twins[:3]):
    print(f"  {p}  ->  {q}")

ratios = {}
for n in (N, 2 * N):
    sol = tsp.solve_heuristic(pts[:n], Metric.TORUS, seed=1)
    ratios[n] = sol.length / math.sqrt(n)
    print(f"n = {n:6d}   L = {sol.length:8.3f}   L / sqrt(n) = {ratios[n]:.4f}")

print(f"dip ratio {ratios[2 * N] / ratios[N]:.4f}   (1 / sqrt 2 = {2 ** -0.5:.4f})")

# the twin-loop path: walk the N-point path, stepping out to each twin and back
base = tsp.solve_heuristic(first, Metric.TORUS, seed=1)
loop, union = tsp.loop_augmented_path(base, first, list(enumerate(twins)), Metric.TORUS)
print(f"loop walk {loop.walk_length:.3f} = {base.length:.3f} + 2 * eps * N = {base.length:.3f} + {2e-4 * N:.3f}")
print(f"path after dropping repeat visits {loop.length:.3f}")

# with a random index shift the window straddles block edges, which blunts the dip
shifted = [process.draw_shift_indices(spec, s) for s in range(5)]
vals = [tsp.solve_heuristic(process.segment(sp, 1, 0, 2 * N - 1), Metric.TORUS).length / math.sqrt(2 * N)
        for sp in shifted]
print("random shifts:", np.round(vals, 4), "shift indices", [sp.stages[0].shift_index for sp in shifted])
