"""Shortest open paths (free endpoints) through points of the unit square.

All solvers return a :class:`PathSolution`.  ``solve_brute`` and
``solve_exact`` are exact; ``solve_heuristic`` is nearest neighbour followed
by neighbour-list 2-opt; ``solve_partition`` is the cell-by-cell
boustrophedon solver; ``loop_augmented_path`` builds the twin-loop path used
to bound the length of a doubled point set.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.spatial import cKDTree

from .. import rng
from ..torus import Metric, as_points, distance
from . import _kernels as K

BRUTE_MAX = 9
EXACT_MAX = 18

METHODS = ("brute", "exact", "heuristic", "partition", "loop_augmented")


class SolverCapError(ValueError):
    """Instance too large for the requested exact method."""


@dataclass
class PathSolution:
    order: np.ndarray
    length: float
    method: str
    metric: Metric
    optimal: bool = False
    # walk length of the loop construction; None for every other method
    walk_length: float | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.order = np.asarray(self.order, dtype=np.int64)
        self.metric = Metric.parse(self.metric)
        self.length = float(self.length)

    @property
    def n(self) -> int:
        return int(self.order.shape[0])

    def to_dict(self):
        d = {"order": [int(i) for i in self.order], "length": self.length,
             "method": self.method, "metric": self.metric.value, "optimal": self.optimal}
        if self.walk_length is not None:
            d["walk_length"] = self.walk_length
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d) -> "PathSolution":
        return cls(order=d["order"], length=d["length"], method=d["method"],
                   metric=d["metric"], optimal=bool(d.get("optimal", False)),
                   walk_length=d.get("walk_length"))


def points_to_json(points) -> str:
    return json.dumps(as_points(points).tolist())


def points_from_json(text: str) -> np.ndarray:
    data = json.loads(text)
    if isinstance(data, dict):
        data = data["points"]
    return as_points(np.asarray(data, dtype=float))


def _xy(points):
    pts = as_points(points)
    return np.ascontiguousarray(pts[:, 0]), np.ascontiguousarray(pts[:, 1])


def _check_order(order, n):
    order = np.asarray(order, dtype=np.int64)
    if order.shape != (n,) or (n and not np.array_equal(np.sort(order), np.arange(n))):
        raise ValueError("order is not a permutation of the point indices")
    return order


def path_length(points, order, metric=Metric.TORUS) -> float:
    xs, ys = _xy(points)
    order = _check_order(order, xs.shape[0])
    return float(K.path_length(xs, ys, order, Metric.parse(metric).code))


def _trivial(n, method, metric):
    return PathSolution(np.arange(n), 0.0, method, metric, optimal=True)


# ---------------------------------------------------------------------------
# exact solvers


@lru_cache(maxsize=None)
def _undirected_perms(n: int) -> np.ndarray:
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int8)
    return perms[perms[:, 0] < perms[:, -1]]


def solve_brute(points, metric=Metric.TORUS) -> PathSolution:
    """Enumerate all n!/2 undirected orders."""
    metric = Metric.parse(metric)
    xs, ys = _xy(points)
    n = xs.shape[0]
    if n > BRUTE_MAX:
        raise SolverCapError(f"brute force limited to n <= {BRUTE_MAX}, got {n}")
    if n <= 1:
        return _trivial(n, "brute", metric)
    D = K.dist_matrix(xs, ys, metric.code)
    perms = _undirected_perms(n)
    lengths = D[perms[:, :-1], perms[:, 1:]].sum(axis=1)
    best = int(np.argmin(lengths))
    return PathSolution(perms[best], float(lengths[best]), "brute", metric, optimal=True)


def solve_exact(points, metric=Metric.TORUS, cap: int = EXACT_MAX) -> PathSolution:
    """Held-Karp over (subset, last vertex) with a zero-cost virtual start."""
    metric = Metric.parse(metric)
    xs, ys = _xy(points)
    n = xs.shape[0]
    if n > cap:
        raise SolverCapError(f"exact solver limited to n <= {cap}, got {n}")
    if n <= 1:
        return _trivial(n, "exact", metric)
    D = K.dist_matrix(xs, ys, metric.code)
    length, order = K.held_karp(D)
    return PathSolution(order, float(length), "exact", metric, optimal=True)


# ---------------------------------------------------------------------------
# heuristic


def candidate_lists(points, metric=Metric.TORUS, k: int = 10) -> np.ndarray:
    """k nearest neighbours of each point under ``metric``, ties by lower index."""
    metric = Metric.parse(metric)
    pts = as_points(points)
    n = pts.shape[0]
    kk = min(k, n - 1)
    if kk <= 0:
        return np.full((n, 1), -1, dtype=np.int64)
    tree = cKDTree(pts, boxsize=1.0 if metric is Metric.TORUS else None)
    _, idx = tree.query(pts, k=kk + 1)
    idx = np.asarray(idx, dtype=np.int64).reshape(n, kk + 1)
    if metric is Metric.FREE:
        xs, ys = _xy(pts)
        return K.free_candidates(xs, ys, idx, kk)
    d = distance(pts[:, None, :], pts[idx], metric)
    d[idx == np.arange(n)[:, None]] = np.inf
    srt = np.lexsort((idx, d), axis=-1)
    return np.ascontiguousarray(np.take_along_axis(idx, srt, axis=1)[:, :kk])


def solve_heuristic(points, metric=Metric.TORUS, candidate_k: int = 10, max_passes: int = 50,
                    seed: int = 0) -> PathSolution:
    """Nearest neighbour from a seeded start, then neighbour-list 2-opt."""
    metric = Metric.parse(metric)
    pts = as_points(points)
    n = pts.shape[0]
    if n <= 1:
        return PathSolution(np.arange(n), 0.0, "heuristic", metric)
    xs, ys = _xy(pts)
    start = int(rng.randint(seed, n))
    path = K.nearest_neighbor_path(xs, ys, metric.code, start)
    cand = candidate_lists(pts, metric, candidate_k)
    order, moves, processed = K.two_opt(xs, ys, path, cand, metric.code, max_passes)
    length = float(K.path_length(xs, ys, order, metric.code))
    return PathSolution(order, length, "heuristic", metric, optimal=False,
                        info={"moves": int(moves), "processed": int(processed)})


def solve(points, metric=Metric.TORUS, method: str = "heuristic", **opts) -> PathSolution:
    method = method.lower()
    if method == "brute":
        return solve_brute(points, metric)
    if method == "exact":
        return solve_exact(points, metric, **opts)
    if method == "heuristic":
        return solve_heuristic(points, metric, **opts)
    if method == "partition":
        return solve_partition(points, metric=metric, **opts)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS[:4]}")


# ---------------------------------------------------------------------------
# partitioning


def _cell_ids(pts, k):
    cx = np.minimum((pts[:, 0] * k).astype(np.int64), k - 1)
    cy = np.minimum((pts[:, 1] * k).astype(np.int64), k - 1)
    return cx, cy


def plowman_order(k: int) -> list[tuple[int, int]]:
    """Cells row by row, alternating direction: (column, row) pairs."""
    cells = []
    for row in range(k):
        cols = range(k) if row % 2 == 0 else range(k - 1, -1, -1)
        cells.extend((c, row) for c in cols)
    return cells


def _solve_cells(pts, k, metric, cap, heuristic_opts):
    cx, cy = _cell_ids(pts, k)
    out = []
    for c, r in plowman_order(k):
        idx = np.flatnonzero((cx == c) & (cy == r))
        if idx.size == 0:
            continue
        sub = pts[idx]
        if idx.size <= cap:
            sol = solve_exact(sub, metric, cap=cap)
        else:
            sol = solve_heuristic(sub, metric, **heuristic_opts)
        out.append((idx, sol))
    return out


def _orient(pieces, xs, ys, code):
    """Orientation of every piece minimising the total joining length (two-state DP)."""
    m = len(pieces)
    ends = [(p[0], p[-1]) for p in pieces]
    # cost[i][s]: best joining cost of pieces 0..i with piece i in state s (1 = reversed)
    cost = np.zeros((m, 2))
    back = np.zeros((m, 2), dtype=np.int64)
    for i in range(1, m):
        for s in range(2):
            head = ends[i][s]
            best, arg = np.inf, 0
            for r in range(2):
                tail = ends[i - 1][1 - r]
                c = cost[i - 1, r] + K.dist(xs[tail], ys[tail], xs[head], ys[head], code)
                if c < best:
                    best, arg = c, r
            cost[i, s] = best
            back[i, s] = arg
    state = int(np.argmin(cost[-1]))
    out = [None] * m
    for i in range(m - 1, -1, -1):
        out[i] = pieces[i][::-1] if state else pieces[i]
        state = int(back[i, state])
    return out


def solve_partition(points, k: int = 4, metric=Metric.TORUS, cap: int = 12,
                    heuristic_opts: dict | None = None) -> PathSolution:
    """Solve every cell of a k x k grid and join the cell paths in plowman's order.

    The orientation of every cell path is chosen to minimise the total
    length of the joins.  The returned length never exceeds the sum of the cell
    path lengths plus ``3k``; this is checked on every call.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    metric = Metric.parse(metric)
    pts = as_points(points)
    n = pts.shape[0]
    heuristic_opts = dict(heuristic_opts or {})
    if n == 0:
        return PathSolution(np.arange(0), 0.0, "partition", metric)
    cells = _solve_cells(pts, k, metric, cap, heuristic_opts)
    pieces = []
    cell_total = 0.0
    for idx, sol in cells:
        cell_total += sol.length
        pieces.append(idx[sol.order])
    xs, ys = _xy(pts)
    code = metric.code
    order = _orient(pieces, xs, ys, code)
    full = np.concatenate(order)
    length = float(K.path_length(xs, ys, full, code))
    bound = cell_total + 3 * k
    assert length <= bound + 1e-9, f"stitching bound violated: {length} > {bound}"
    return PathSolution(full, length, "partition", metric, optimal=False,
                        info={"cell_total": cell_total, "stitch_bound": bound, "k": k,
                              "nonempty_cells": len(pieces)})


def partition_lower_diagnostic(points, k: int, metric=Metric.TORUS, reference_length: float | None = None,
                               cap: int = EXACT_MAX, heuristic_opts: dict | None = None) -> dict:
    """Sum of per-cell optimal lengths and the constant it implies for the lower stitch bound.

    ``implied_C0 = max(0, (sum_cells - reference_length) / k)``.  Cells larger
    than ``cap`` fall back to the heuristic and the report says so.
    """
    metric = Metric.parse(metric)
    pts = as_points(points)
    cells = _solve_cells(pts, k, metric, cap, dict(heuristic_opts or {}))
    total = sum(sol.length for _, sol in cells)
    exact = all(sol.optimal for _, sol in cells)
    if reference_length is None:
        reference_length = solve_exact(pts, metric, cap=cap).length
    return {"sum_cells": total, "implied_C0": max(0.0, (total - reference_length) / k),
            "reference_length": float(reference_length), "k": k, "cells_exact": exact,
            "cell_lengths": [sol.length for _, sol in cells]}


# ---------------------------------------------------------------------------
# loop augmentation


def loop_augmented_path(base: PathSolution, points, twin_pairs, metric=Metric.TORUS) -> tuple[PathSolution, np.ndarray]:
    """Adjoin an out-and-back loop from each listed point to its twin.

    ``twin_pairs`` is a sequence of ``(index, twin_point)``.  The twins are
    appended after the base points, so twin ``i`` of the list gets index
    ``n + i`` in the returned point array.  The solution's ``walk_length``
    is the exact length of the walk with the loops, ``base.length + sum 2 d``;
    ``order`` is that walk with repeated visits removed, so ``length``
    (a genuine path length) is at most ``walk_length``.
    """
    metric = Metric.parse(metric)
    pts = as_points(points)
    n = pts.shape[0]
    if base.n != n:
        raise ValueError("base solution does not match the point set")
    twins_by_index: dict[int, list[int]] = {}
    twin_pts = []
    extra = 0.0
    for i, (idx, tp) in enumerate(twin_pairs):
        idx = int(idx)
        if not 0 <= idx < n:
            raise IndexError(f"twin index {idx} out of range [0, {n})")
        tp = as_points([tuple(tp)])[0]
        twin_pts.append(tp)
        twins_by_index.setdefault(idx, []).append(n + i)
        extra += 2.0 * float(K.dist(pts[idx, 0], pts[idx, 1], tp[0], tp[1], metric.code))
    union = np.vstack([pts] + ([np.array(twin_pts)] if twin_pts else []))
    order = []
    for v in base.order:
        order.append(int(v))
        order.extend(twins_by_index.get(int(v), ()))
    order = np.array(order, dtype=np.int64)
    xs, ys = _xy(union)
    length = float(K.path_length(xs, ys, order, metric.code))
    sol = PathSolution(order, length, "loop_augmented", metric, optimal=False,
                       walk_length=base.length + extra)
    return sol, union
