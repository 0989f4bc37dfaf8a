"""Command line interface: ``twincities <subcommand> [options]``.

Experiment subcommands read an optional JSON config, apply flag overrides
(``--seed``, ``--metric``, ``--reps``, ``--n-values`` and generic
``--set dotted.key=value``), run, and write a CSV plus a JSON manifest into
the output directory (``--out``, else the config's ``out``, else
``$TWINCITIES_OUT``, else ``./twincities-out``).  Exit status is 2 for
configuration errors, 1 for a failed ``verify`` and 0 otherwise.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import experiments as ex
from . import process, rng, stats, tsp
from .experiments import ConfigError, ExperimentConfig
from .process import ProcessSpec
from .torus import Metric

DEFAULT_OSCILLATE = "oscillate_default.json"


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def set_dotted(d: dict, key: str, value) -> None:
    """Assign ``value`` at a dotted path; integer parts index into lists."""
    parts = key.split(".")
    cur = d
    for i, part in enumerate(parts):
        last = i == len(parts) - 1
        if isinstance(cur, list):
            try:
                idx = int(part)
                cur[idx]
            except (ValueError, IndexError):
                raise ConfigError(key, f"no list element {part!r}") from None
            if last:
                cur[idx] = value
            else:
                cur = cur[idx]
        elif isinstance(cur, dict):
            if last:
                cur[part] = value
            else:
                cur = cur.setdefault(part, {})
        else:
            raise ConfigError(key, "path descends into a scalar")


def load_config(args, default: str | None = None) -> dict:
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError("config", f"cannot read {args.config}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON ({exc.msg} at line {exc.lineno})") from None
    elif default:
        raw = json.loads(resources.files("twincities.configs").joinpath(default).read_text())
    else:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be an object")
    if args.seed is not None:
        raw["master_seed"] = args.seed
    if args.metric is not None:
        raw["metric"] = args.metric
    if args.reps is not None:
        raw["reps"] = args.reps
    if args.n_values is not None:
        try:
            raw["n_values"] = [int(v) for v in args.n_values.split(",") if v.strip()]
        except ValueError:
            raise ConfigError("n_values", f"expected a comma-separated list of integers, got {args.n_values!r}") from None
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(item, "override must look like key.path=value")
        key, value = item.split("=", 1)
        set_dotted(raw, key, _parse_value(value))
    return raw


def make_config(raw: dict) -> ExperimentConfig:
    return ExperimentConfig.from_dict(raw)


def out_dir(args, raw: dict | None = None) -> Path:
    p = Path(args.out or (raw or {}).get("out") or ex.output_dir(None))
    p.mkdir(parents=True, exist_ok=True)
    return p


def _finish(path: Path, stem: str, records, config: ExperimentConfig | dict, spec, started, extra=None):
    if records is not None:
        csv_path = path / f"{stem}.csv"
        ex.append_records(records, csv_path)
        print(f"wrote {csv_path}")
    cfg = config.to_dict() if isinstance(config, ExperimentConfig) else config
    ex.write_manifest(path / f"{stem}_manifest.json", cfg, spec, started, ex.now_iso(), extra)


# ---------------------------------------------------------------------------
# subcommands


def cmd_sample(args) -> int:
    started = ex.now_iso()
    raw = load_config(args)
    spec = ProcessSpec.from_dict(raw["spec"]) if "spec" in raw else ProcessSpec()
    if args.seed is not None:
        spec = ProcessSpec(args.seed, spec.stages)
    j = spec.depth if args.j is None else args.j
    if args.n < 1:
        raise ConfigError("n", "must be >= 1")
    pts = process.segment(spec, j, args.start, args.start + args.n - 1)
    path = out_dir(args, raw)
    if args.format == "csv":
        target = path / "sample.csv"
        with open(target, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "x", "y"])
            for t, (x, y) in enumerate(pts, start=args.start):
                w.writerow([t, repr(float(x)), repr(float(y))])
    else:
        target = path / "sample.json"
        doc = {"spec": spec.to_dict(), "j": j, "start": args.start, "points": pts.tolist()}
        target.write_text(json.dumps(doc) + "\n", encoding="utf-8")
    print(f"wrote {target}")
    ex.write_manifest(path / "sample_manifest.json", raw, spec, started, ex.now_iso())
    return 0


def cmd_tsp(args) -> int:
    try:
        pts = tsp.points_from_json(Path(args.instance).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError("instance", f"cannot read {args.instance}: {exc.strerror}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError("instance", f"not a point list: {exc}") from None
    try:
        metric = Metric.parse(args.metric or "torus")
    except ValueError as exc:
        raise ConfigError("metric", str(exc)) from None
    opts = {}
    if args.method == "heuristic":
        opts["seed"] = rng.DEFAULT_SEED if args.seed is None else args.seed
    sol = tsp.solve(pts, metric, args.method, **opts)
    path = out_dir(args)
    target = path / "solution.json"
    target.write_text(sol.to_json() + "\n", encoding="utf-8")
    print(f"wrote {target}: length={sol.length:.6f} optimal={sol.optimal}")
    return 0


def cmd_beta(args) -> int:
    started = ex.now_iso()
    raw = load_config(args)
    cfg = make_config(raw)
    res = ex.estimate_beta(cfg)
    for r in res["records"]:
        print(f"n={r.n:>7d} ratio={r.mean_ratio:.4f} +- {r.stderr:.4f}")
    print(f"beta_hat={res['beta_hat']:.4f}")
    _finish(out_dir(args, raw), "beta", res["records"], cfg, cfg.spec, started)
    return 0


def cmd_oscillate(args) -> int:
    started = ex.now_iso()
    raw = load_config(args, DEFAULT_OSCILLATE)
    cfg = make_config(raw)
    if cfg.spec.depth == 0:
        raise ConfigError("spec.stages", "oscillation needs at least one stage")
    recs = ex.oscillation_experiment(cfg, randomized=not args.no_randomized)
    summary = {}
    for r in recs:
        print(f"{r.experiment:<24s} {r.checkpoint_kind:<12s} n={r.n:>7d} ratio={r.mean_ratio:.4f} +- {r.stderr:.4f}")
    for j in range(1, cfg.spec.depth + 1):
        by = {r.checkpoint_kind: r for r in recs if r.experiment == "oscillate" and r.j == j}
        if f"dip({j})" in by and f"recover({j})" in by:
            q, se = ex.ratio_of_means(by[f"dip({j})"], by[f"recover({j})"])
            summary[f"dip_over_recover({j})"] = {"ratio": q, "stderr": se}
            print(f"stage {j}: dip/recover = {q:.4f} +- {se:.4f}")
    _finish(out_dir(args, raw), "oscillate", recs, cfg, cfg.spec, started, {"summary": summary})
    return 0


def cmd_closeness(args) -> int:
    started = ex.now_iso()
    raw = load_config(args)
    cfg = make_config(raw)
    if cfg.spec.depth == 0:
        raise ConfigError("spec.stages", "closeness needs at least one stage")
    j = cfg.spec.depth if args.j is None else args.j
    rep = ex.closeness_diagnostic(cfg.spec, j, args.m, args.cells, cfg.reps, cfg.master_seed)
    print(json.dumps(rep))
    path = out_dir(args, raw)
    with open(path / "closeness.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rep), lineterminator="\n")
        w.writeheader()
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in rep.items()})
    _finish(path, "closeness", None, cfg, cfg.spec, started, {"report": rep})
    return 0


def cmd_discrepancy(args) -> int:
    started = ex.now_iso()
    raw = load_config(args)
    cfg = make_config(raw)
    rows = []
    for n in cfg.n_values:
        if args.source == "kronecker":
            pts = process.kronecker_sequence(n=n)
        elif args.source == "iid":
            pts = process.segment(ProcessSpec(cfg.master_seed), 0, 0, n - 1)
        else:
            pts = process.segment(ProcessSpec(cfg.master_seed, cfg.spec.stages), cfg.spec.depth, 0, n - 1)
        res = stats.rectangle_discrepancy(pts, args.mode, args.resolution)
        rows.append({"source": args.source, "n": n, "mode": res.mode, "resolution": res.resolution,
                     "value": res.value, "nD": n * res.value, "seed": cfg.master_seed})
        print(f"{args.source} n={n} D={res.value:.6f} nD={n * res.value:.2f}")
    path = out_dir(args, raw)
    with open(path / "discrepancy.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    _finish(path, "discrepancy", None, cfg, cfg.spec, started)
    return 0


def _find_tests(explicit: str | None) -> Path | None:
    if explicit:
        return Path(explicit)
    here = Path(__file__).resolve()
    for parent in [Path.cwd(), *here.parents]:
        cand = parent / "tests"
        if (cand / "test_acceptance.py").exists():
            return cand
    return None


def cmd_verify(args) -> int:
    tests = _find_tests(args.tests)
    if tests is None or not tests.exists():
        raise ConfigError("tests", "test directory not found; pass --tests PATH")
    try:
        import pytest
    except ImportError:
        raise ConfigError("tests", "pytest is required for verify (install the 'test' extra)") from None
    target = tests / "test_acceptance.py" if args.acceptance_only else tests
    code = pytest.main([str(target), "-q", "-s" if args.acceptance_only else "-q"])
    return 0 if code == 0 else 1


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=lambda s: int(s, 0), help="master seed (64-bit)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--metric", choices=[m.value for m in Metric])
    common.add_argument("--reps", type=int)
    common.add_argument("--n-values", dest="n_values", help="comma-separated sample sizes")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config entry by dotted path, value parsed as JSON")

    p = argparse.ArgumentParser(prog="twincities", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", parents=[common], help="write a segment of a process")
    s.add_argument("--n", type=int, default=10)
    s.add_argument("--start", type=int, default=0)
    s.add_argument("--j", type=int, help="stage count (default: all stages)")
    s.add_argument("--format", choices=["json", "csv"], default="json")
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("tsp", parents=[common], help="solve a shortest-path instance")
    s.add_argument("instance", help="JSON point list")
    s.add_argument("--method", choices=list(tsp.METHODS[:4]), default="heuristic")
    s.set_defaults(func=cmd_tsp)

    s = sub.add_parser("beta", parents=[common], help="estimate the path-length constant")
    s.set_defaults(func=cmd_beta)

    s = sub.add_parser("oscillate", parents=[common], help="dip and recovery checkpoints")
    s.add_argument("--no-randomized", action="store_true", help="skip the random-shift run")
    s.set_defaults(func=cmd_oscillate)

    s = sub.add_parser("closeness", parents=[common], help="closeness-in-distribution diagnostic")
    s.add_argument("--j", type=int)
    s.add_argument("--m", type=int, default=2)
    s.add_argument("--cells", type=int, default=4)
    s.set_defaults(func=cmd_closeness)

    s = sub.add_parser("discrepancy", parents=[common], help="rectangle discrepancy of a point set")
    s.add_argument("--source", choices=["iid", "kronecker", "process"], default="kronecker")
    s.add_argument("--mode", choices=[stats.GRID_APPROX, stats.EXACT_ANCHORED], default=stats.GRID_APPROX)
    s.add_argument("--resolution", type=int, default=64)
    s.set_defaults(func=cmd_discrepancy)

    s = sub.add_parser("verify", help="run the test and acceptance suite")
    s.add_argument("--tests", help="path to the tests directory")
    s.add_argument("--acceptance-only", action="store_true")
    s.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (tsp.SolverCapError, ValueError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
