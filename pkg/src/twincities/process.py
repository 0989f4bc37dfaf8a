"""Random-access construction of the twin-city processes.

The base process is an iid uniform sequence on the torus indexed by all of
Z.  Stage ``j`` doubles every length-``N`` block of the stage ``j-1`` process
into a block of length ``2N`` whose second half is the first half translated
by ``epsilon`` in the first coordinate (the hat process), then re-indexes by a
shift ``I`` in ``[0, 2N)`` to make the result stationary.

Evaluation never materialises prefixes: the index of a stage-``j`` point is
mapped down through the stages to a base index, and the translations are
applied on the way back up.  Cost is O(j) per point.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import rng
from .torus import TorusPoint


@dataclass(frozen=True)
class Stage:
    epsilon: float
    block_len: int
    shift_index: int = 0

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.block_len < 1:
            raise ValueError(f"block_len must be >= 1, got {self.block_len}")
        if not 0 <= self.shift_index < 2 * self.block_len:
            raise ValueError(
                f"shift_index must lie in [0, {2 * self.block_len - 1}], got {self.shift_index}")

    def to_dict(self):
        return {"epsilon": self.epsilon, "block_len": self.block_len,
                "shift_index": self.shift_index}


@dataclass(frozen=True)
class ProcessSpec:
    base_seed: int = rng.DEFAULT_SEED
    stages: tuple[Stage, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "base_seed", int(self.base_seed) & rng.MASK64)
        object.__setattr__(self, "stages", tuple(self.stages))

    @property
    def depth(self) -> int:
        return len(self.stages)

    def truncated(self, j: int) -> "ProcessSpec":
        return replace(self, stages=self.stages[:j])

    def with_stage(self, stage: Stage) -> "ProcessSpec":
        return replace(self, stages=self.stages + (stage,))

    def with_shifts(self, shifts: Sequence[int]) -> "ProcessSpec":
        stages = tuple(replace(s, shift_index=int(i)) for s, i in zip(self.stages, shifts, strict=True))
        return replace(self, stages=stages)

    def to_dict(self):
        return {"base_seed": self.base_seed, "stages": [s.to_dict() for s in self.stages]}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d) -> "ProcessSpec":
        if not isinstance(d, dict):
            raise ValueError("a process spec must be an object")
        unknown = set(d) - {"base_seed", "stages"}
        if unknown:
            raise ValueError(f"unknown ProcessSpec field(s): {sorted(unknown)}")
        raw_stages = d.get("stages", [])
        if not isinstance(raw_stages, list):
            raise ValueError("stages must be a list")
        stages = []
        for i, s in enumerate(raw_stages):
            if not isinstance(s, dict):
                raise ValueError(f"stages[{i}] must be an object")
            extra = set(s) - {"epsilon", "block_len", "shift_index"}
            if extra:
                raise ValueError(f"stages[{i}] has unknown field(s) {sorted(extra)}")
            try:
                stages.append(Stage(epsilon=float(s["epsilon"]), block_len=int(s["block_len"]),
                                    shift_index=int(s.get("shift_index", 0))))
            except KeyError as exc:
                raise ValueError(f"stages[{i}] is missing field {exc.args[0]!r}") from None
            except (TypeError, ValueError) as exc:
                raise ValueError(f"stages[{i}]: {exc}") from None
        return cls(base_seed=int(d.get("base_seed", rng.DEFAULT_SEED)), stages=tuple(stages))

    @classmethod
    def from_json(cls, text: str) -> "ProcessSpec":
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# base process and index maps

def base_eval_xy(seed, t):
    """Vectorised base process: returns ``(x, y)`` arrays."""
    t = np.asarray(t, dtype=np.int64)
    return rng.uniform01(seed, t, 0), rng.uniform01(seed, t, 1)


def base_eval(seed: int, t: int) -> TorusPoint:
    x, y = base_eval_xy(seed, t)
    return TorusPoint(float(x), float(y))


def hat_index_map(u, N: int):
    """Map a hat-process index to ``(base_index, shifted)``.

    Block ``k`` covers hat indices ``[2kN, 2kN + 2N)``; its first half repeats
    base indices ``[kN, kN + N)`` and its second half repeats them translated.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    u = np.asarray(u, dtype=np.int64)
    k = np.floor_divide(u, 2 * N)
    r = u - 2 * N * k
    shifted = r >= N
    base = k * N + np.where(shifted, r - N, r)
    if base.ndim == 0:
        return int(base), bool(shifted)
    return base, shifted


def _stage_arrays(stages):
    eps = np.array([s.epsilon for s in stages], dtype=float)
    blocks = np.array([s.block_len for s in stages], dtype=np.int64)
    shifts = np.array([s.shift_index for s in stages], dtype=np.int64)
    return eps, blocks, shifts


def evaluate(base_seed, eps, blocks, shifts, t, base: Callable | None = None):
    """Vectorised stage evaluation.

    ``base_seed`` and ``t`` broadcast together; ``shifts`` is either a
    length-``j`` vector or an array whose last axis has length ``j`` and whose
    leading axes broadcast with ``t`` (one shift vector per replication).
    ``base`` optionally replaces the base process with any callable
    ``(seed, index) -> (x, y)``.
    """
    base = base or base_eval_xy
    j = len(eps)
    shifts = np.asarray(shifts, dtype=np.int64)
    idx = np.asarray(t, dtype=np.int64)
    flags = []
    for s in range(j - 1, -1, -1):
        u = idx + shifts[..., s]
        N = int(blocks[s])
        k = np.floor_divide(u, 2 * N)
        r = u - 2 * N * k
        flag = r >= N
        idx = k * N + np.where(flag, r - N, r)
        flags.append(flag)
    x, y = base(base_seed, idx)
    x = np.asarray(x, dtype=float)
    for s in range(j):
        flag = flags[j - 1 - s]
        moved = np.mod(x + eps[s], 1.0)
        moved = np.where(moved >= 1.0, 0.0, moved)
        x = np.where(flag, moved, x)
    x, y = np.broadcast_arrays(x, y)
    return np.stack([x, y], axis=-1)


def _check_level(spec: ProcessSpec, j: int):
    if not 0 <= j <= spec.depth:
        raise IndexError(f"stage count {j} out of range [0, {spec.depth}]")


def eval_points(spec: ProcessSpec, j: int, t, base: Callable | None = None) -> np.ndarray:
    """Array form of :func:`eval`; ``t`` may be any integer array."""
    _check_level(spec, j)
    eps, blocks, shifts = _stage_arrays(spec.stages[:j])
    return evaluate(spec.base_seed, eps, blocks, shifts, t, base)


def eval(spec: ProcessSpec, j: int, t: int) -> TorusPoint:  # noqa: A001
    p = eval_points(spec, j, int(t))
    return TorusPoint(float(p[0]), float(p[1]))


def segment(spec: ProcessSpec, j: int, a: int, b: int) -> np.ndarray:
    """Points ``X^(j)_a, ..., X^(j)_b`` as an ``(b - a + 1, 2)`` array."""
    if a > b:
        raise ValueError(f"empty segment [{a}:{b}]")
    return eval_points(spec, j, np.arange(a, b + 1, dtype=np.int64))


def sample_segment(spec: ProcessSpec, j: int, a: int, b: int) -> list[TorusPoint]:
    return [TorusPoint(float(x), float(y)) for x, y in segment(spec, j, a, b)]


def hat_segment(spec: ProcessSpec, j: int, a: int, b: int) -> np.ndarray:
    """Segment of the hat process built on ``X^(j-1)`` with stage ``j``'s (eps, N).

    This is the stage-``j`` process before its index shift.
    """
    if not 1 <= j <= spec.depth:
        raise IndexError(f"hat level {j} out of range [1, {spec.depth}]")
    pinned = spec.truncated(j)
    pinned = replace(pinned, stages=pinned.stages[:-1] + (replace(pinned.stages[-1], shift_index=0),))
    return segment(pinned, j, a, b)


# ---------------------------------------------------------------------------
# randomness of the shift indices

def draw_shift_indices(spec: ProcessSpec, rng_seed: int) -> ProcessSpec:
    """Draw every stage's shift uniformly on ``[0, 2N_j)`` from ``rng_seed``."""
    shifts = [int(rng.randint(rng_seed, 2 * s.block_len, j)) for j, s in enumerate(spec.stages)]
    return spec.with_shifts(shifts)


def replicate_shifts(blocks, seeds) -> np.ndarray:
    """Shift vectors for many replications: row ``r`` matches ``draw_shift_indices(., seeds[r])``."""
    seeds = np.asarray(seeds, dtype=np.uint64)
    out = np.empty(seeds.shape + (len(blocks),), dtype=np.int64)
    for j, N in enumerate(blocks):
        out[..., j] = rng.randint(seeds, 2 * int(N), j)
    return out


def replication_specs(template: ProcessSpec, master_seed: int, reps: int,
                      randomize_shifts: bool = True, stream: int = 0) -> list[ProcessSpec]:
    """Independent realisations: fresh base seed (and shifts) per replication."""
    base_seeds = rng.derive_seeds(master_seed, reps, stream, 0)
    shift_seeds = rng.derive_seeds(master_seed, reps, stream, 1)
    specs = []
    for r in range(reps):
        sp = replace(template, base_seed=int(base_seeds[r]))
        if randomize_shifts:
            sp = draw_shift_indices(sp, int(shift_seeds[r]))
        specs.append(sp)
    return specs


def replicate_segment(spec: ProcessSpec, j: int, a: int, b: int, reps: int, master_seed: int,
                      randomize_shifts: bool = True, stream: int = 0) -> np.ndarray:
    """``(reps, b - a + 1, 2)`` array; row ``r`` is ``X^(j)[a:b]`` under ``replication_specs(...)[r]``."""
    _check_level(spec, j)
    if a > b:
        raise ValueError(f"empty segment [{a}:{b}]")
    eps, blocks, shifts = _stage_arrays(spec.stages[:j])
    base_seeds = rng.derive_seeds(master_seed, reps, stream, 0)
    if randomize_shifts:
        shifts = replicate_shifts(blocks, rng.derive_seeds(master_seed, reps, stream, 1))
    else:
        shifts = np.broadcast_to(shifts, (reps, j))
    t = np.arange(a, b + 1, dtype=np.int64)[None, :]
    return evaluate(base_seeds[:, None], eps, blocks, shifts[:, None, :], t)


# ---------------------------------------------------------------------------
# Kronecker sequences

def kronecker_sequence(phi1: float = math.sqrt(2.0), phi2: float = math.sqrt(3.0), n: int = 1,
                       start: int = 1) -> np.ndarray:
    """Points ``(t*phi1 mod 1, t*phi2 mod 1)`` for ``t = start, ..., start + n - 1``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    t = np.arange(start, start + n, dtype=float)
    pts = np.stack([np.mod(t * phi1, 1.0), np.mod(t * phi2, 1.0)], axis=1)
    return np.where(pts >= 1.0, 0.0, pts)


# ---------------------------------------------------------------------------
# parameter schedule


@dataclass
class Schedule:
    """Block lengths and translation sizes chosen stage by stage.

    ``etas`` are the smallness levels for stages 1, 2, ...; the defaults
    (``2**-j``, ``N_1 = 1000``, ``eps_1 = 1e-4``) are desk-scale choices.
    """
    etas: list[float]
    chosen: list[tuple[int, float]] = field(default_factory=list)
    calibration_grid: list[int] = field(default_factory=list)
    base_multiple: int = 250
    max_block_len: int = 1 << 22

    def __post_init__(self):
        e = list(self.etas)
        if any(not 0 < v < 1 for v in e) or any(a <= b for a, b in zip(e, e[1:])):
            raise ValueError("etas must be strictly decreasing values in (0, 1)")

    @classmethod
    def geometric(cls, count: int, **kw) -> "Schedule":
        return cls(etas=[2.0 ** -(j + 1) for j in range(count)], **kw)

    def eta(self, j: int) -> float:
        return self.etas[j - 1]


class CalibrationError(RuntimeError):
    pass


def rule2_epsilon(eta: float, j: int, N: int, prev_eps: float | None) -> float:
    eps = eta / math.sqrt(j * N)
    if prev_eps is not None:
        eps = min(prev_eps / 2.0, eps)
    # floating point rounding must not break eps * sqrt(j * N) <= eta
    while eps * math.sqrt(j) * math.sqrt(N) > eta:
        eps = math.nextafter(eps, 0.0)
    return eps


def calibration_grid(N: int, j: int, grid_factor: int) -> list[int]:
    lo = max(N // j, 2)
    hi = 2 * j * N
    pts = np.unique(np.round(np.geomspace(lo, hi, max(grid_factor, 2))).astype(int))
    return [int(v) for v in pts]


def calibrate_schedule(spec: ProcessSpec, schedule: Schedule, j: int,
                       ratio_estimator: Callable[[ProcessSpec, int, int, int], float],
                       beta_hat: float, grid_factor: int = 3, reps: int = 4,
                       log: Callable[[str], None] | None = None) -> tuple[int, float]:
    """Choose ``(N_j, eps_j)`` for stage ``j`` (1-indexed).

    Candidates ``N = m * j * 2**i`` are tried in increasing order starting
    above ``j**2 * N_{j-1}``; the first one whose estimated ratio
    ``E[L_n] / sqrt(n)`` for ``X^(j-1)`` stays within ``eta_j * beta_hat`` of
    ``beta_hat`` on the log-spaced grid over ``[N/j, 2jN]`` is accepted.
    ``eps_j`` then satisfies ``eps_j * sqrt(j * N_j) <= eta_j`` exactly.
    """
    if j < 1:
        raise ValueError("stage numbers start at 1")
    if spec.depth < j - 1:
        raise ValueError(f"stage {j - 1} must be specified before calibrating stage {j}")
    if beta_hat <= 0:
        raise ValueError("beta_hat must be positive")
    prev_N = spec.stages[j - 2].block_len if j >= 2 else 1
    prev_eps = spec.stages[j - 2].epsilon if j >= 2 else None
    eta = schedule.eta(j)
    m = schedule.base_multiple
    N = m * j
    while N <= j * j * prev_N:
        N *= 2
    base = spec.truncated(j - 1)
    while N <= schedule.max_block_len:
        grid = calibration_grid(N, j, grid_factor)
        ok = True
        for n in grid:
            ratio = ratio_estimator(base, j - 1, n, reps)
            if log:
                log(f"calibrate j={j} N={N} n={n} ratio={ratio:.4f} target={beta_hat:.4f}+-{eta * beta_hat:.4f}")
            if abs(ratio - beta_hat) > eta * beta_hat:
                ok = False
                break
        if ok:
            eps = rule2_epsilon(eta, j, N, prev_eps)
            schedule.chosen.append((N, eps))
            schedule.calibration_grid = grid
            return N, eps
        N *= 2
    raise CalibrationError(
        f"no block length up to {schedule.max_block_len} passed for stage {j}; "
        "increase reps or the grid, or relax eta")
