import csv
import json
import math

import numpy as np
import pytest

from twincities import experiments as ex
from twincities.experiments import ConfigError, EstimateRecord, ExperimentConfig
from twincities import process
from twincities.process import ProcessSpec, Schedule, Stage
from twincities.torus import Metric

SEED = 20141221


def test_config_validation():
    with pytest.raises(ConfigError) as e:
        ExperimentConfig(reps=0)
    assert e.value.field == "reps"
    with pytest.raises(ConfigError) as e:
        ExperimentConfig(n_values=[10, 10])
    assert e.value.field == "n_values"
    with pytest.raises(ConfigError) as e:
        ExperimentConfig.from_dict({"repz": 3})
    assert e.value.field == "repz"
    with pytest.raises(ConfigError) as e:
        ExperimentConfig.from_dict({"metric": "manhattan"})
    assert e.value.field == "metric"
    cfg = ExperimentConfig.from_dict({"spec": {"stages": [{"epsilon": 0.1, "block_len": 4}]},
                                      "n_values": [5, 9], "reps": 2})
    assert ExperimentConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()


def test_record_sanity_cap():
    with pytest.raises(ValueError):
        EstimateRecord(n=10, mean_ratio=3.7, stderr=0.0, reps=1)
    with pytest.raises(ValueError):
        EstimateRecord(n=10, mean_ratio=0.5, stderr=-1.0, reps=1)


def test_estimate_beta_n1_is_zero():
    res = ex.estimate_beta(ExperimentConfig(n_values=[1], reps=3))
    assert res["beta_hat"] == 0.0 and res["records"][0].stderr == 0.0


def test_estimate_beta_small_exact():
    cfg = ExperimentConfig(n_values=[4, 8], reps=5, method="exact")
    res = ex.estimate_beta(cfg)
    assert [r.n for r in res["records"]] == [4, 8]
    assert all(r.checkpoint_kind == "iid" for r in res["records"])
    assert res["beta_hat"] == res["records"][-1].mean_ratio


def test_reproducible_and_order_independent():
    cfg = ExperimentConfig(n_values=[50, 200], reps=4, master_seed=7)
    a = ex.records_csv(ex.estimate_beta(cfg)["records"])
    b = ex.records_csv(ex.estimate_beta(cfg)["records"])
    assert a == b
    spec = ProcessSpec(0, (Stage(0.01, 10),))
    full = ex.segment_ratios(spec, 1, 30, 6, 99)
    # each replication depends on its own index only
    part = ex.segment_ratios(spec, 1, 30, 3, 99)
    assert np.array_equal(full[:3], part)


def test_checkpoint_arithmetic():
    spec = ProcessSpec(1, (Stage(0.01, 50), Stage(0.001, 4000)))
    assert ex.checkpoints(spec, 1) == {"recover": 50, "dip": 100}
    assert ex.checkpoints(spec, 2) == {"recover": 2000, "dip": 16000}


def test_oscillation_records_small():
    spec = ProcessSpec(3, (Stage(0.001, 40, 0),))
    cfg = ExperimentConfig(spec=spec, reps=3)
    recs = ex.oscillation_experiment(cfg)
    kinds = [(r.experiment, r.checkpoint_kind, r.n) for r in recs]
    assert kinds == [("oscillate", "recover(1)", 40), ("oscillate", "dip(1)", 80),
                     ("oscillate_random_shift", "recover(1)", 40),
                     ("oscillate_random_shift", "dip(1)", 80)]
    assert all(0 <= r.mean_ratio <= ex.FEW_CAP for r in recs)
    with pytest.raises(Exception):
        ex.oscillation_experiment(ExperimentConfig(spec=spec, reps=2, method="exact"))


def test_duplicate_limit_halves_sample():
    # with eps far below the path scale the doubled window costs almost nothing extra
    spec = ProcessSpec(3, (Stage(1e-9, 400, 0),))
    cfg = ExperimentConfig(spec=spec, reps=6)
    rec, dip = ex.oscillation_experiment(cfg, randomized=False)
    q, _ = ex.ratio_of_means(dip, rec)
    assert q == pytest.approx(2 ** -0.5, abs=0.02)


def test_closeness_small_cases():
    spec = ProcessSpec(3, (Stage(0.001, 1000),))
    rep = ex.closeness_diagnostic(spec, 1, 0, 4, 20_000)
    assert rep["empirical_distance"] == 0.0 and rep["bound"] == 0.0
    with pytest.raises(MemoryError):
        ex.closeness_diagnostic(spec, 1, 6, 8, 10)
    rep = ex.closeness_diagnostic(spec, 1, 2, 4, 20_000)
    assert rep["empirical_distance"] <= rep["discordance"] + 1e-12


def test_closeness_shrinks_with_N():
    vals = [ex.closeness_diagnostic(ProcessSpec(3, (Stage(0.001, N),)), 1, 2, 4, 50_000)["empirical_distance"]
            for N in (250, 1000, 4000)]
    assert vals[0] > vals[1] > vals[2]


def test_limit_gap():
    assert ex.limit_gap_report([], 10)["bound"] == 0.0
    rep = ex.limit_gap_report([1e4], 10, j=1)
    base = 3 * 10 ** 1.5 / 1e4
    assert base == pytest.approx(0.0095, abs=1e-4)
    # minimal growth beyond N_2 adds 1/9 + 1/(9*16) + ... of 1/N_2
    assert base <= rep["bound"] <= base * 1.12
    ratio = ex.limit_gap_report([1e4], 20)["bound"] / rep["bound"]
    assert ratio == pytest.approx(2 ** 1.5)
    assert ex.limit_gap_report([1e4], 10, tolerance=0.02)["certified"]


def test_logtsp():
    from twincities.process import kronecker_sequence, segment
    rows = ex.logtsp_diagnostic(kronecker_sequence(n=4096), [1, 64, 4096])
    assert rows[0]["value"] is None and rows[0]["length"] == 0.0
    assert 0.45 <= rows[-1]["value"] <= 0.60
    iid = ex.logtsp_diagnostic(lambda n: segment(ProcessSpec(5), 0, 0, n - 1), [4096])
    assert 0.45 <= iid[0]["value"] <= 0.60


def test_csv_and_manifest(tmp_path):
    recs = [EstimateRecord(n=10, mean_ratio=0.5, stderr=0.01, reps=2)]
    path = tmp_path / "r.csv"
    ex.append_records(recs, path)
    ex.append_records(recs, path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == list(ex.CSV_COLUMNS) and len(rows) == 3
    assert ex.read_records(path) == recs * 2
    ex.write_manifest(tmp_path / "m.json", {"a": 1}, ProcessSpec(), "s", "f")
    doc = json.loads((tmp_path / "m.json").read_text())
    assert set(doc) == {"config", "spec", "version", "started", "finished"}


def test_calibrate_second_stage_over_N1_1000():
    beta = ex.estimate_beta(ExperimentConfig(n_values=[4000], reps=6))["beta_hat"]
    schedule = Schedule(etas=[0.5, 0.05])
    eps1 = process.rule2_epsilon(schedule.eta(1), 1, 1000, None)
    spec = ex.build_schedule(Stage(eps1, 1000, 0), schedule, 2, beta,
                             ex.make_ratio_estimator(), reps=3)
    N2, eps2 = spec.stages[1].block_len, spec.stages[1].epsilon
    assert N2 > 4000
    assert eps2 * math.sqrt(2) * math.sqrt(N2) <= schedule.eta(2)
