"""Counting functionals, local-uniformity checks, uniformity tests and discrepancy."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np
from numba import njit
from scipy import stats as _st

from . import process, rng
from .process import ProcessSpec
from .torus import as_points


@dataclass(frozen=True)
class RegionQuery:
    """Half-open axis-aligned torus rectangle ``[x0, x0+width) x [y0, y0+height)``."""
    x0: float
    y0: float
    width: float
    height: float
    container_side: float = 1.0

    def __post_init__(self):
        if not (0 < self.width <= 1 and 0 < self.height <= 1):
            raise ValueError("width and height must lie in (0, 1]")
        if not 0 < self.container_side <= 1:
            raise ValueError("container_side must lie in (0, 1]")
        if self.width > self.container_side or self.height > self.container_side:
            raise ValueError("rectangle does not fit in a subsquare of the container side")
        object.__setattr__(self, "x0", float(np.mod(self.x0, 1.0)))
        object.__setattr__(self, "y0", float(np.mod(self.y0, 1.0)))

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.size == 0:
            return np.zeros(pts.shape[:-1], dtype=bool)
        rx = np.mod(pts[..., 0] - self.x0, 1.0)
        ry = np.mod(pts[..., 1] - self.y0, 1.0)
        return (rx < self.width) & (ry < self.height)

    def relative(self, points) -> np.ndarray:
        """Coordinates relative to the lower-left corner, in [0, width) x [0, height)."""
        pts = np.asarray(points, dtype=float)
        return np.stack([np.mod(pts[..., 0] - self.x0, 1.0), np.mod(pts[..., 1] - self.y0, 1.0)], axis=-1)

    def left_translate(self, eps: float) -> "RegionQuery":
        return replace(self, x0=self.x0 - eps)


def count_in_region(points, region: RegionQuery) -> int:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    return int(region.contains(pts).sum())


# ---------------------------------------------------------------------------
# local uniformity parameter arithmetic


@dataclass(frozen=True)
class LocalUniformityParams:
    alpha: float
    M: int

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.M < 0:
            raise ValueError("M must be non-negative")

    def after_hat(self, eps: float, N: int, theta: float = 0.5) -> "LocalUniformityParams":
        """Parameters after a hat transform: scale ``theta * min(eps, alpha - eps)``, ``M + 4N``."""
        if not 0 < eps < self.alpha:
            raise ValueError("need 0 < eps < alpha")
        if not 0 < theta < 1:
            raise ValueError("theta must lie in (0, 1)")
        bound = min(eps, self.alpha - eps)
        alpha_hat = theta * bound
        if not 0 < alpha_hat < bound:
            raise ValueError(f"no representable scale strictly inside (0, {bound})")
        return LocalUniformityParams(alpha_hat, self.M + 4 * N)

    def after_index_shift(self, K: int) -> "LocalUniformityParams":
        return LocalUniformityParams(self.alpha, self.M + K)

    def after_T(self, eps: float, N: int, theta: float = 0.5) -> "LocalUniformityParams":
        return self.after_hat(eps, N, theta).after_index_shift(2 * N)


def variance_bound_after_hat(C: float, N: int) -> float:
    """Generous variance constant of the hat process given that of its input."""
    return C + 32.0 * N * N


# ---------------------------------------------------------------------------
# Monte Carlo over replications


def variance_condition_fit(spec: ProcessSpec, j: int, region: RegionQuery, window_lengths,
                           reps: int, master_seed: int = rng.DEFAULT_SEED,
                           randomize_shifts: bool = True) -> dict:
    """Empirical ``Var N(A, X^(j)[0:w-1]) / w`` for each window length ``w``."""
    if reps < 2:
        raise ValueError("reps must be >= 2")
    per_window = []
    for w in window_lengths:
        pts = process.replicate_segment(spec, j, 0, int(w) - 1, reps, master_seed, randomize_shifts)
        counts = region.contains(pts).sum(axis=1)
        var = float(np.var(counts, ddof=1))
        per_window.append({"w": int(w), "mean": float(counts.mean()), "variance": var,
                           "ratio": var / int(w)})
    fitted = max(r["ratio"] for r in per_window)
    report = {"per_window": per_window, "fitted_C": fitted, "reps": reps, "j": j,
              "area": region.area}
    if j >= 1:
        report["hat_bound_form"] = variance_bound_after_hat(fitted, spec.stages[j - 1].block_len)
    return report


# ---------------------------------------------------------------------------
# uniformity tests


def _chi2(counts) -> tuple[float, float]:
    counts = np.asarray(counts, dtype=float).ravel()
    expected = counts.sum() / counts.size
    stat = float(((counts - expected) ** 2).sum() / expected)
    return stat, float(_st.chi2.sf(stat, counts.size - 1))


def uniformity_chi_square(points, g: int = 16) -> dict:
    """Pearson chi-square of the counts on a g x g grid against the uniform law."""
    if g < 2:
        raise ValueError("g must be >= 2")
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = pts.shape[0]
    if n < 5 * g * g:
        raise ValueError(f"need at least {5 * g * g} points for a {g}x{g} grid, got {n}")
    cx = np.minimum((pts[:, 0] * g).astype(np.int64), g - 1)
    cy = np.minimum((pts[:, 1] * g).astype(np.int64), g - 1)
    counts = np.bincount(cy * g + cx, minlength=g * g)
    stat, p = _chi2(counts)
    return {"statistic": stat, "p_value": p, "dof": g * g - 1, "n": n}


def marginal_uniformity(spec: ProcessSpec, j: int, t: int, reps: int, g: int = 16,
                        master_seed: int = rng.DEFAULT_SEED) -> dict:
    """Chi-square test of the law of ``X^(j)_t`` over independent realisations."""
    pts = process.replicate_segment(spec, j, t, t, reps, master_seed)[:, 0, :]
    out = uniformity_chi_square(pts, g)
    out.update({"name": "marginal_uniformity", "params": {"j": j, "t": t, "reps": reps, "g": g},
                "seed": int(master_seed)})
    return out


def _rect_chi2(rel, width, height, g):
    cx = np.minimum((rel[:, 0] / width * g).astype(np.int64), g - 1)
    cy = np.minimum((rel[:, 1] / height * g).astype(np.int64), g - 1)
    counts = np.bincount(cy * g + cx, minlength=g * g)
    return _chi2(counts)


def twin_shift_collect(half_block_points: np.ndarray, region: RegionQuery, eps: float,
                       shift_back: bool = True) -> np.ndarray:
    """Points of ``^eps A`` moved right by ``eps`` together with the points of ``A``.

    Applied to the unshifted halves of complete blocks this is exactly the
    set of hat-process points that land in ``A``.  With ``shift_back=False``
    the left-translated points are returned where they are.
    """
    pts = np.asarray(half_block_points, dtype=float).reshape(-1, 2)
    left = region.left_translate(eps)
    from_left = pts[left.contains(pts)].copy()
    if shift_back:
        from_left[:, 0] = np.mod(from_left[:, 0] + eps, 1.0)
    return np.vstack([from_left, pts[region.contains(pts)]])


def twin_shift_uniformity_check(spec: ProcessSpec, stage_index: int, region: RegionQuery, window: int,
                                reps: int, g: int = 4, master_seed: int = rng.DEFAULT_SEED,
                                negative_control: bool = False) -> dict:
    """Check that hat-process points falling in ``region`` are uniform on it.

    For stage ``s`` with translation ``eps`` and block length ``N``, the
    complete blocks among hat indices ``[0, window)`` are rebuilt from the
    unshifted half blocks of ``X^(s-1)``; their points in ``^eps A`` moved
    right by ``eps`` plus their points in ``A`` should be an iid uniform
    sample of ``A``.  The negative control skips the move and tests the
    multiset on the hull ``[x0 - eps, x0 + width) x [y0, y0 + height)``.
    """
    if not 1 <= stage_index <= spec.depth:
        raise IndexError(f"stage {stage_index} out of range [1, {spec.depth}]")
    st = spec.stages[stage_index - 1]
    eps, N = st.epsilon, st.block_len
    if not negative_control:
        if eps < region.width:
            raise ValueError("left-translated region overlaps the region (need eps >= width)")
        if region.width + eps > region.container_side:
            raise ValueError("region and its left translate do not fit in one container square")
    blocks = window // (2 * N)
    if blocks < 1:
        raise ValueError("window contains no complete block")
    base = process.replicate_segment(spec, stage_index - 1, 0, blocks * N - 1, reps, master_seed)
    collected = twin_shift_collect(base.reshape(-1, 2), region, eps, shift_back=not negative_control)
    if negative_control:
        hull = RegionQuery(region.x0 - eps, region.y0, min(region.width + eps, 1.0), region.height)
        stat, p = _rect_chi2(hull.relative(collected), hull.width, hull.height, g)
    else:
        stat, p = _rect_chi2(region.relative(collected), region.width, region.height, g)
    return {"name": "twin_shift_uniformity" + ("_negative_control" if negative_control else ""),
            "statistic": stat, "p_value": p, "count": int(collected.shape[0]),
            "params": {"stage": stage_index, "epsilon": eps, "N": N, "window": window,
                       "complete_blocks": blocks, "reps": reps, "g": g,
                       "region": [region.x0, region.y0, region.width, region.height]},
            "seed": int(master_seed)}


def report_to_json(report: dict) -> str:
    keys = ("name", "statistic", "p_value", "params", "seed")
    return json.dumps({k: report.get(k) for k in keys})


# ---------------------------------------------------------------------------
# rectangle discrepancy

GRID_APPROX = "grid"
EXACT_ANCHORED = "exact"
EXACT_MAX_N = 500


@dataclass(frozen=True)
class DiscrepancyResult:
    value: float
    n: int
    mode: str
    resolution: int


@njit(cache=True)
def _grid_discrepancy(P, n, m):
    best = 0.0
    inv = 1.0 / m
    for a in range(m):
        for b in range(a + 1, m + 1):
            w = (b - a) * inv
            for c in range(m):
                for d in range(c + 1, m + 1):
                    cnt = P[b, d] - P[a, d] - P[b, c] + P[a, c]
                    v = abs(cnt / n - w * (d - c) * inv)
                    if v > best:
                        best = v
    return best


@njit(cache=True)
def _exact_discrepancy(xs, ys, n):
    # points are pre-sorted by y
    xv = np.unique(xs)
    p = xv.shape[0]
    best = 0.0
    # excess over closed rectangles with edges on point coordinates
    for a in range(p):
        for b in range(a, p):
            xa = xv[a]
            xb = xv[b]
            w = xb - xa
            C = 0
            minh = np.inf
            k = 0
            while k < n:
                yk = ys[k]
                cnt = 0
                k2 = k
                while k2 < n and ys[k2] == yk:
                    if xs[k2] >= xa and xs[k2] <= xb:
                        cnt += 1
                    k2 += 1
                if cnt > 0:
                    h = C / n - w * yk
                    if h < minh:
                        minh = h
                    C += cnt
                    v = C / n - w * yk - minh
                    if v > best:
                        best = v
                k = k2
    # deficit over open rectangles with edges on point coordinates or the boundary
    edges = np.empty(p + 2)
    edges[0] = 0.0
    edges[1:p + 1] = xv
    edges[p + 1] = 1.0
    for a in range(p + 2):
        for b in range(a + 1, p + 2):
            ea = edges[a]
            eb = edges[b]
            w = eb - ea
            if w <= best:
                continue
            C = 0
            minlow = 0.0
            k = 0
            while k < n:
                yk = ys[k]
                cnt = 0
                k2 = k
                while k2 < n and ys[k2] == yk:
                    if xs[k2] > ea and xs[k2] < eb:
                        cnt += 1
                    k2 += 1
                if cnt > 0:
                    v = w * yk - C / n - minlow
                    if v > best:
                        best = v
                    C += cnt
                    low = w * yk - C / n
                    if low < minlow:
                        minlow = low
                k = k2
            v = w - C / n - minlow
            if v > best:
                best = v
    return best


def rectangle_discrepancy(points, mode: str = GRID_APPROX, resolution: int = 64) -> DiscrepancyResult:
    """Supremum of ``|empirical measure - area|`` over axis-aligned rectangles of the unit square.

    ``mode="grid"`` scans rectangles with corners on the ``m x m`` grid and
    gives a lower bound.  ``mode="exact"`` scans the grid induced by the
    point coordinates together with 0 and 1, which attains the supremum.
    """
    pts = as_points(points)
    n = pts.shape[0]
    if n == 0:
        raise ValueError("discrepancy of an empty point set is undefined")
    if mode == GRID_APPROX:
        m = int(resolution)
        if m < 2:
            raise ValueError("grid resolution must be >= 2")
        H, _, _ = np.histogram2d(pts[:, 0], pts[:, 1], bins=m, range=[[0, 1], [0, 1]])
        P = np.zeros((m + 1, m + 1))
        P[1:, 1:] = H.cumsum(0).cumsum(1)
        value = _grid_discrepancy(P, float(n), m)
        return DiscrepancyResult(float(value), n, mode, m)
    if mode == EXACT_ANCHORED:
        if n > EXACT_MAX_N:
            raise ValueError(f"exact discrepancy limited to n <= {EXACT_MAX_N}, got {n}")
        srt = np.lexsort((pts[:, 0], pts[:, 1]))
        value = _exact_discrepancy(np.ascontiguousarray(pts[srt, 0]), np.ascontiguousarray(pts[srt, 1]), n)
        return DiscrepancyResult(float(min(value, 1.0)), n, mode, n + 2)
    raise ValueError(f"unknown discrepancy mode {mode!r}")


def brute_discrepancy(points) -> float:
    """O(n^5) reference over every rectangle spanned by coordinate values, for tiny n."""
    pts = as_points(points)
    n = pts.shape[0]
    xs = np.unique(np.concatenate([[0.0, 1.0], pts[:, 0]]))
    ys = np.unique(np.concatenate([[0.0, 1.0], pts[:, 1]]))
    best = 0.0
    for i, xa in enumerate(xs):
        for xb in xs[i:]:
            inx_c = (pts[:, 0] >= xa) & (pts[:, 0] <= xb)
            inx_o = (pts[:, 0] > xa) & (pts[:, 0] < xb)
            for k, ya in enumerate(ys):
                for yb in ys[k:]:
                    area = (xb - xa) * (yb - ya)
                    closed = np.count_nonzero(inx_c & (pts[:, 1] >= ya) & (pts[:, 1] <= yb))
                    opened = np.count_nonzero(inx_o & (pts[:, 1] > ya) & (pts[:, 1] < yb))
                    best = max(best, closed / n - area, area - opened / n)
    return best


def regular_grid(m: int) -> np.ndarray:
    c = (np.arange(m) + 0.5) / m
    xx, yy = np.meshgrid(c, c)
    return np.stack([xx.ravel(), yy.ravel()], axis=1)


def discrepancy_scaling(D: float, n: int) -> dict:
    """``n D_n`` against the iid and low-discrepancy reference scales."""
    return {"nD": n * D, "sqrt_n": math.sqrt(n), "log_n_cubed": math.log(n) ** 3}
