"""Monte Carlo harness for path-length ratios and the process diagnostics.

Every replication draws its base seed (and, when asked, its shift indices)
from ``(master_seed, stream, rep)``, so a record depends only on the config
and never on the order in which replications are run.
"""
from __future__ import annotations

import csv
import datetime as _dt
import io
import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import __version__, process, rng, tsp
from .process import ProcessSpec, Schedule, Stage
from .torus import Metric

FEW_CAP = 3.0 * (1.0 + 0.2)
CSV_COLUMNS = ("experiment", "checkpoint_kind", "j", "n", "mean_ratio", "stderr", "reps",
               "metric", "method", "seed")
OUTPUT_ENV = "TWINCITIES_OUT"


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class ExperimentConfig:
    spec: ProcessSpec = field(default_factory=ProcessSpec)
    metric: Metric = Metric.TORUS
    method: str = "heuristic"
    solver: dict = field(default_factory=dict)
    n_values: list = field(default_factory=lambda: [1000])
    reps: int = 10
    master_seed: int = rng.DEFAULT_SEED
    out: str | None = None
    randomize_shifts: bool = False

    def __post_init__(self):
        self.metric = Metric.parse(self.metric)
        self.n_values = [int(v) for v in self.n_values]
        if self.reps < 1:
            raise ConfigError("reps", f"must be >= 1, got {self.reps}")
        if not self.n_values:
            raise ConfigError("n_values", "must be nonempty")
        if any(v < 1 for v in self.n_values):
            raise ConfigError("n_values", "entries must be >= 1")
        if any(a >= b for a, b in zip(self.n_values, self.n_values[1:])):
            raise ConfigError("n_values", "must be strictly increasing")
        if self.method not in tsp.METHODS[:4]:
            raise ConfigError("method", f"unknown solver {self.method!r}")
        self.master_seed = int(self.master_seed) & rng.MASK64

    def to_dict(self) -> dict:
        return {"spec": self.spec.to_dict(), "metric": self.metric.value, "method": self.method,
                "solver": dict(self.solver), "n_values": list(self.n_values), "reps": self.reps,
                "master_seed": self.master_seed, "out": self.out,
                "randomize_shifts": self.randomize_shifts}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(unknown[0], "unknown config field")
        d = dict(d)
        if "spec" in d and not isinstance(d["spec"], ProcessSpec):
            try:
                d["spec"] = ProcessSpec.from_dict(d["spec"])
            except (TypeError, ValueError, AttributeError) as exc:
                raise ConfigError("spec", str(exc)) from None
        if "metric" in d:
            try:
                d["metric"] = Metric.parse(d["metric"])
            except ValueError as exc:
                raise ConfigError("metric", str(exc)) from None
        for key, typ in (("reps", int), ("master_seed", int)):
            if key in d:
                try:
                    d[key] = typ(d[key])
                except (TypeError, ValueError):
                    raise ConfigError(key, f"expected an integer, got {d[key]!r}") from None
        if "n_values" in d:
            try:
                d["n_values"] = [int(v) for v in d["n_values"]]
            except (TypeError, ValueError):
                raise ConfigError("n_values", "expected a list of integers") from None
        if "solver" in d and not isinstance(d["solver"], dict):
            raise ConfigError("solver", "expected an object")
        return cls(**d)


@dataclass(frozen=True)
class EstimateRecord:
    n: int
    mean_ratio: float
    stderr: float
    reps: int
    checkpoint_kind: str = "plain"
    j: int = 0
    experiment: str = "beta"
    metric: str = Metric.TORUS.value
    method: str = "heuristic"
    seed: int = rng.DEFAULT_SEED

    def __post_init__(self):
        if self.stderr < 0 or self.mean_ratio < 0:
            raise ValueError("mean_ratio and stderr must be non-negative")
        if self.mean_ratio > FEW_CAP:
            raise ValueError(f"mean_ratio {self.mean_ratio} exceeds the sanity cap {FEW_CAP}")

    def row(self) -> dict:
        return {k: getattr(self, k) for k in CSV_COLUMNS}


def checkpoint_kind(kind: str, j: int) -> str:
    return f"{kind}({j})" if kind in ("dip", "recover") else kind


# ---------------------------------------------------------------------------
# ratio estimation


def segment_ratios(spec: ProcessSpec, j: int, n: int, reps: int, master_seed: int,
                   metric=Metric.TORUS, method: str = "heuristic", solver: dict | None = None,
                   randomize_shifts: bool = True, stream: int = 0, start: int = 0) -> np.ndarray:
    """``L(X^(j)[start:start+n-1]) / sqrt(n)`` for each replication."""
    solver = dict(solver or {})
    out = np.zeros(reps)
    if n <= 1:
        return out
    pts = process.replicate_segment(spec, j, start, start + n - 1, reps, master_seed,
                                    randomize_shifts, stream)
    for r in range(reps):
        opts = dict(solver)
        if method == "heuristic":
            opts.setdefault("seed", rng.derive_seed(master_seed, stream, 2, r))
        out[r] = tsp.solve(pts[r], metric, method, **opts).length / math.sqrt(n)
    return out


def _summarise(ratios: np.ndarray) -> tuple[float, float]:
    reps = ratios.shape[0]
    mean = float(ratios.mean())
    se = float(ratios.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0
    return mean, se


def estimate_beta(config: ExperimentConfig, j: int | None = None) -> dict:
    """Mean ratio at every ``n``; ``beta_hat`` is the value at the largest ``n``."""
    j = config.spec.depth if j is None else j
    records = []
    for i, n in enumerate(config.n_values):
        ratios = segment_ratios(config.spec, j, n, config.reps, config.master_seed, config.metric,
                                config.method, config.solver, config.randomize_shifts, stream=i)
        mean, se = _summarise(ratios)
        records.append(EstimateRecord(n=n, mean_ratio=mean, stderr=se, reps=config.reps,
                                      checkpoint_kind="iid" if j == 0 else "plain", j=j,
                                      experiment="beta", metric=config.metric.value,
                                      method=config.method, seed=config.master_seed))
    return {"beta_hat": records[-1].mean_ratio, "records": records}


def checkpoints(spec: ProcessSpec, j: int) -> dict[str, int]:
    """Sample sizes of the stage-``j`` checkpoints."""
    N = spec.stages[j - 1].block_len
    return {"recover": N // j, "dip": 2 * j * N}


def oscillation_experiment(config: ExperimentConfig, stages: Sequence[int] | None = None,
                           kinds: Sequence[str] = ("recover", "dip"),
                           randomized: bool = True) -> list[EstimateRecord]:
    """Ratios at the recovery and dip checkpoints of each stage.

    The headline run uses the shift indices stored in ``config.spec`` (zero
    pins the hat process); with ``randomized`` a second run draws fresh
    shifts per replication.  Both checkpoints of a stage share base seeds so
    their ratio has lower variance.  Windows start at index 0 of the deepest
    process; with zero shifts above stage ``j`` that window is ``X^(j)[0:n-1]``.
    """
    spec = config.spec
    stages = list(range(1, spec.depth + 1)) if stages is None else list(stages)
    runs = [("oscillate", False)] + ([("oscillate_random_shift", True)] if randomized else [])
    records = []
    for experiment, rand in runs:
        for j in stages:
            if not 1 <= j <= spec.depth:
                raise ValueError(f"stage {j} is not specified")
            cps = checkpoints(spec, j)
            for kind in kinds:
                n = cps[kind]
                if config.method in ("brute", "exact") and n > tsp.EXACT_MAX:
                    raise tsp.SolverCapError(f"checkpoint n={n} exceeds the exact solver cap")
                ratios = segment_ratios(spec, spec.depth, n, config.reps, config.master_seed,
                                        config.metric, config.method, config.solver, rand,
                                        stream=1000 * j + (1 if rand else 0))
                mean, se = _summarise(ratios)
                records.append(EstimateRecord(n=n, mean_ratio=mean, stderr=se, reps=config.reps,
                                              checkpoint_kind=checkpoint_kind(kind, j), j=j,
                                              experiment=experiment, metric=config.metric.value,
                                              method=config.method, seed=config.master_seed))
    return records


def ratio_of_means(num: EstimateRecord, den: EstimateRecord) -> tuple[float, float]:
    """``num / den`` with a delta-method standard error (independence assumed, so conservative
    when the two share seeds)."""
    r = num.mean_ratio / den.mean_ratio
    se = abs(r) * math.hypot(num.stderr / num.mean_ratio, den.stderr / den.mean_ratio)
    return r, se


def make_ratio_estimator(metric=Metric.TORUS, method: str = "heuristic", solver: dict | None = None,
                         master_seed: int = rng.DEFAULT_SEED) -> Callable:
    """Estimator ``(spec, j, n, reps) -> mean ratio`` for :func:`process.calibrate_schedule`."""
    def estimate(spec, j, n, reps):
        stream = rng.derive_seed(master_seed, j, n) & 0x7FFFFFFF
        return float(segment_ratios(spec, j, n, reps, master_seed, metric, method, solver,
                                    randomize_shifts=True, stream=stream).mean())
    return estimate


def build_schedule(first: Stage, schedule: Schedule, depth: int, beta_hat: float,
                   estimator: Callable, base_seed: int = rng.DEFAULT_SEED, grid_factor: int = 3,
                   reps: int = 4, log: Callable | None = None) -> ProcessSpec:
    """Start from ``first`` and calibrate stages ``2..depth`` in turn, all with shift 0."""
    spec = ProcessSpec(base_seed, (first,))
    schedule.chosen[:] = [(first.block_len, first.epsilon)]
    for j in range(2, depth + 1):
        N, eps = process.calibrate_schedule(spec, schedule, j, estimator, beta_hat,
                                            grid_factor=grid_factor, reps=reps, log=log)
        spec = spec.with_stage(Stage(eps, N, 0))
    return spec


# ---------------------------------------------------------------------------
# closeness in distribution


def closeness_diagnostic(spec: ProcessSpec, j: int, m: int, cells: int, reps: int,
                         master_seed: int = rng.DEFAULT_SEED, bootstrap: int = 200,
                         max_bins: int = 1 << 24) -> dict:
    """Partition distance between ``X~[0:m]`` and the input window ``X[0:m]``.

    Each replication draws one realisation of the stage ``j-1`` process and
    one shift ``I``.  ``X~[0:m]`` is read from stage ``j``; its partner is the
    stage ``j-1`` window starting at the base index that ``I`` maps to,
    translated when ``I`` lands in a second half block.  That partner has
    the law of ``X[0:m]`` and coincides with ``X~[0:m]`` unless the window
    crosses a half-block boundary.  The histogram distance over the
    ``cells x cells`` product partition lower-bounds total variation.
    """
    if m < 0:
        raise ValueError("m must be >= 0")
    if not 1 <= j <= spec.depth:
        raise IndexError(f"stage {j} out of range [1, {spec.depth}]")
    if cells < 1:
        raise ValueError("cells must be >= 1")
    nbins = cells ** (2 * (m + 1))
    if nbins > max_bins:
        raise MemoryError(f"histogram with {nbins} bins exceeds the cap of {max_bins}")
    st = spec.stages[j - 1]
    eps_all, blocks, _ = process._stage_arrays(spec.stages[:j])
    seeds = rng.derive_seeds(master_seed, reps, 0, 0)
    shifts = process.replicate_shifts(blocks, rng.derive_seeds(master_seed, reps, 0, 1))
    t = np.arange(m + 1, dtype=np.int64)[None, :]
    tilde = process.evaluate(seeds[:, None], eps_all, blocks, shifts[:, None, :], t)

    start, flag = process.hat_index_map(shifts[:, j - 1], st.block_len)
    partner = process.evaluate(seeds[:, None], eps_all[:-1], blocks[:-1], shifts[:, None, :-1],
                               start[:, None] + t)
    moved = np.mod(partner[..., 0] + st.epsilon, 1.0)
    partner[..., 0] = np.where(flag[:, None], np.where(moved >= 1.0, 0.0, moved), partner[..., 0])

    def bins(pts):
        c = np.minimum((pts * cells).astype(np.int64), cells - 1).reshape(reps, -1)
        return (c * (cells ** np.arange(c.shape[1], dtype=np.int64))).sum(axis=1)

    a, b = bins(tilde), bins(partner)

    def distance(ia, ib):
        p = np.bincount(ia, minlength=nbins)
        q = np.bincount(ib, minlength=nbins)
        return float(np.clip(p - q, 0, None).sum() / ia.shape[0])

    emp = distance(a, b)
    boot_rng = np.random.default_rng(rng.derive_seed(master_seed, 3))
    boots = np.empty(bootstrap)
    for i in range(bootstrap):
        idx = boot_rng.integers(0, reps, reps)
        boots[i] = distance(a[idx], b[idx])
    discord = float(np.mean(np.any(tilde != partner, axis=(1, 2))))
    return {"empirical_distance": emp, "mc_stderr": float(boots.std(ddof=1)) if bootstrap > 1 else 0.0,
            "bound": m / st.block_len, "discordance": discord, "m": m, "cells": cells,
            "reps": reps, "N": st.block_len, "j": j, "seed": int(master_seed)}


# ---------------------------------------------------------------------------
# limit gap


def limit_gap_report(tail_block_lens: Sequence[int], n: int, j: int = 1, extrapolate: bool = True,
                     tolerance: float | None = None) -> dict:
    """Bound ``3 n^{3/2} sum_k 1/N_{j+k}`` on the gap to the limit process.

    ``tail_block_lens`` lists ``N_{j+1}, N_{j+2}, ...`` as far as they are
    known.  Beyond the last one the sum is continued with the minimal growth
    ``N_i = i^2 N_{i-1}``, which dominates every admissible tail.  An empty
    tail means no further stages, and the bound is 0.
    """
    tail = [float(v) for v in tail_block_lens]
    if any(v <= 0 for v in tail):
        raise ValueError("block lengths must be positive")
    known = sum(1.0 / v for v in tail)
    extra = 0.0
    if tail and extrapolate:
        stage = j + len(tail)
        inv = 1.0 / tail[-1]
        while True:
            stage += 1
            inv /= stage * stage
            extra += inv
            if inv < 1e-18 * (known + extra):
                break
    bound = 3.0 * n ** 1.5 * (known + extra)
    out = {"bound": bound, "n": n, "j": j, "known_sum": known, "tail_estimate": extra}
    if tolerance is not None:
        out["certified"] = bound <= tolerance
    return out


# ---------------------------------------------------------------------------
# log-TSP diagnostic


def logtsp_diagnostic(sequence, n_values: Sequence[int], metric=Metric.EUCLIDEAN,
                      method: str = "heuristic", solver: dict | None = None) -> list[dict]:
    """``log L_n / log n`` for prefixes of a sequence; ``None`` where undefined.

    ``sequence`` is an ``(N, 2)`` array or a callable ``n -> (n, 2)`` array.
    """
    n_values = [int(v) for v in n_values]
    if any(a >= b for a, b in zip(n_values, n_values[1:])):
        raise ValueError("n_values must be increasing")
    rows = []
    for n in n_values:
        pts = sequence(n) if callable(sequence) else np.asarray(sequence)[:n]
        if pts.shape[0] < n:
            raise ValueError(f"sequence has fewer than {n} points")
        L = tsp.solve(pts, metric, method, **(solver or {})).length if n > 1 else 0.0
        value = math.log(L) / math.log(n) if n > 1 and L > 0 else None
        rows.append({"n": n, "length": L, "value": value})
    return rows


# ---------------------------------------------------------------------------
# output


def records_csv(records: Sequence[EstimateRecord], header: bool = True) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    if header:
        w.writeheader()
    for r in records:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.row().items()})
    return buf.getvalue()


def append_records(records: Sequence[EstimateRecord], path: str | os.PathLike) -> None:
    """Append rows to a CSV file, writing the header only for a new file."""
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", encoding="utf-8", newline="") as fh:
        fh.write(records_csv(records, header=new))


def read_records(path: str | os.PathLike) -> list[EstimateRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        out = []
        for row in csv.DictReader(fh):
            out.append(EstimateRecord(n=int(row["n"]), mean_ratio=float(row["mean_ratio"]),
                                      stderr=float(row["stderr"]), reps=int(row["reps"]),
                                      checkpoint_kind=row["checkpoint_kind"], j=int(row["j"]),
                                      experiment=row["experiment"], metric=row["metric"],
                                      method=row["method"], seed=int(row["seed"])))
        return out


def now_iso() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def write_manifest(path: str | os.PathLike, config: dict, spec: ProcessSpec | None,
                   started: str, finished: str, extra: dict | None = None) -> None:
    doc = {"config": config, "spec": spec.to_dict() if spec is not None else None,
           "version": f"twincities {__version__}", "started": started, "finished": finished}
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def output_dir(out: str | None) -> str:
    return out or os.environ.get(OUTPUT_ENV) or "twincities-out"
