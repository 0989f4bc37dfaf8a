import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twincities import process, stats
from twincities.process import ProcessSpec, Stage
from twincities.stats import (LocalUniformityParams, RegionQuery, count_in_region, rectangle_discrepancy,
                              twin_shift_uniformity_check, uniformity_chi_square, variance_condition_fit)

import oracles

SEED = 20141221
unit = st.floats(0, 1, exclude_max=True)


# --- counting ------------------------------------------------------------------

def test_count_examples():
    assert count_in_region(np.empty((0, 2)), RegionQuery(0.1, 0.1, 0.2, 0.2)) == 0
    pts = np.random.default_rng(0).random((50, 2))
    assert count_in_region(pts, RegionQuery(0.3, 0.7, 1.0, 1.0)) == 50
    wrap = RegionQuery(0.85, 0.85, 0.3, 0.3, container_side=0.5)
    assert count_in_region([(0.1, 0.1), (0.9, 0.9)], wrap) == 2


def test_region_validation():
    with pytest.raises(ValueError):
        RegionQuery(0, 0, 0.6, 0.1, container_side=0.5)
    with pytest.raises(ValueError):
        RegionQuery(0, 0, 0.0, 0.1)


@settings(max_examples=50)
@given(unit, unit, st.floats(0.01, 0.5), st.floats(0.01, 0.99), st.floats(0.01, 1.0), unit, unit)
def test_count_additive_and_translation_invariant(x0, y0, w1, frac, h, dx, dy):
    pts = np.random.default_rng(1).random((300, 2))
    w2 = w1 * frac
    whole = RegionQuery(x0, y0, w1, h)
    left = RegionQuery(x0, y0, w2, h)
    right = RegionQuery(x0 + w2, y0, w1 - w2, h)
    # rounding at the split edge may move one point across it
    total = count_in_region(pts, whole)
    parts = count_in_region(pts, left) + count_in_region(pts, right)
    assert abs(total - parts) <= 1
    moved = np.mod(pts + [dx, dy], 1.0)
    shifted = RegionQuery(x0 + dx, y0 + dy, w1, h)
    assert abs(count_in_region(moved, shifted) - total) <= 1


def test_count_additive_exact_on_dyadic():
    pts = np.random.default_rng(2).random((1000, 2))
    whole = RegionQuery(0.25, 0.5, 0.5, 0.25)
    left = RegionQuery(0.25, 0.5, 0.125, 0.25)
    right = RegionQuery(0.375, 0.5, 0.375, 0.25)
    assert count_in_region(pts, whole) == count_in_region(pts, left) + count_in_region(pts, right)


# --- parameter arithmetic ------------------------------------------------------

@given(st.floats(1e-6, 1.0), st.floats(0.0, 1.0, exclude_min=True, exclude_max=True),
       st.integers(0, 10**9), st.integers(1, 10**9))
def test_local_uniformity_updates(alpha, frac, M, N):
    eps = alpha * frac
    if not 1e-300 < eps < alpha or alpha - eps < 1e-300:
        return
    p = LocalUniformityParams(alpha, M)
    hat = p.after_hat(eps, N)
    assert hat.M == M + 4 * N
    assert 0 < hat.alpha < min(eps, alpha - eps)
    assert p.after_T(eps, N).M == M + 6 * N == hat.after_index_shift(2 * N).M


def test_local_uniformity_errors():
    with pytest.raises(ValueError):
        LocalUniformityParams(0.0, 1)
    with pytest.raises(ValueError):
        LocalUniformityParams(0.5, 1).after_hat(0.6, 3)
    with pytest.raises(ValueError):
        LocalUniformityParams(1.0, 1).after_hat(5e-324, 3)


# --- variance condition ----------------------------------------------------------

def test_variance_iid_binomial():
    reg = RegionQuery(0.2, 0.3, 0.2, 0.25)
    p = reg.area
    rep = variance_condition_fit(ProcessSpec(SEED), 0, reg, [1, 50, 400], reps=400)
    se = p * (1 - p) * math.sqrt(2 / 399)
    assert rep["fitted_C"] <= p * (1 - p) + 3 * se
    assert rep["per_window"][0]["variance"] <= 0.25 + 0.05
    with pytest.raises(ValueError):
        variance_condition_fit(ProcessSpec(SEED), 0, reg, [5], reps=1)


def test_variance_one_stage_reported():
    spec = ProcessSpec(SEED, (Stage(0.05, 100),))
    reg = RegionQuery(0.4, 0.4, 0.04, 0.1, container_side=0.2)
    rep = variance_condition_fit(spec, 1, reg, [200, 800], reps=100)
    assert math.isfinite(rep["fitted_C"]) and rep["hat_bound_form"] >= 32 * 100 ** 2


# --- uniformity ------------------------------------------------------------------

def test_chi_square_closed_forms():
    g = 4
    c = (np.arange(g) + 0.5) / g
    balanced = np.array([(x, y) for x in c for y in c] * 5)
    out = uniformity_chi_square(balanced, g)
    assert out["statistic"] == 0.0 and out["p_value"] == 1.0
    out = uniformity_chi_square(np.tile([[0.1, 0.1]], (100, 1)), 2)
    assert out["statistic"] == pytest.approx(100 * 3)
    with pytest.raises(ValueError):
        uniformity_chi_square(np.zeros((19, 2)), 2)


def test_chi_square_matches_oracle():
    pts = np.random.default_rng(3).random((2000, 2))
    g = 5
    counts = [0] * (g * g)
    for x, y in pts:
        counts[int(y * g) * g + int(x * g)] += 1
    assert uniformity_chi_square(pts, g)["statistic"] == pytest.approx(oracles.chi_square(counts))


def test_marginal_uniformity_x2():
    spec = ProcessSpec(SEED, (Stage(0.01, 50), Stage(0.001, 1000)))
    out = stats.marginal_uniformity(spec, 2, 4321, 100_000, g=16, master_seed=SEED)
    assert out["p_value"] > 0.001


# --- twin-shift identity -----------------------------------------------------------

def test_twin_shift_collect_matches_hat_process():
    spec = ProcessSpec(5, (Stage(0.2, 50, 0),))
    reg = RegionQuery(0.5, 0.3, 0.1, 0.2, container_side=0.5)
    blocks = 6
    hat = process.hat_segment(spec, 1, 0, blocks * 100 - 1)
    base = process.segment(spec, 0, 0, blocks * 50 - 1)
    got = stats.twin_shift_collect(base, reg, 0.2)
    want = hat[reg.contains(hat)]
    key = lambda a: sorted(map(tuple, np.round(a, 12)))  # noqa: E731
    assert key(got) == key(want)


def test_twin_shift_iid_null():
    reg = RegionQuery(0.1, 0.1, 0.1, 0.1, container_side=0.4)
    spec = ProcessSpec(SEED, (Stage(0.15, 100, 0),))
    out = twin_shift_uniformity_check(spec, 1, reg, window=2000, reps=500, master_seed=SEED)
    assert out["p_value"] > 0.001
    assert set(json.loads(stats.report_to_json(out))) == {"name", "statistic", "p_value", "params", "seed"}


def test_twin_shift_one_stage_example():
    spec = ProcessSpec(SEED, (Stage(0.2, 100, 0),))
    reg = RegionQuery(0.5, 0.3, 0.1, 0.1, container_side=0.5)
    out = twin_shift_uniformity_check(spec, 1, reg, window=20 * 200, reps=500, master_seed=SEED)
    assert out["params"]["complete_blocks"] == 20
    assert out["count"] > 10_000
    assert out["p_value"] > 0.001


def test_twin_shift_negative_control_grows():
    spec = ProcessSpec(SEED, (Stage(0.2, 100, 0),))
    reg = RegionQuery(0.5, 0.3, 0.1, 0.1, container_side=0.5)
    small = twin_shift_uniformity_check(spec, 1, reg, 4000, 50, negative_control=True)
    big = twin_shift_uniformity_check(spec, 1, reg, 4000, 400, negative_control=True)
    assert big["statistic"] > 4 * small["statistic"] and big["p_value"] < 1e-6


def test_twin_shift_precondition():
    spec = ProcessSpec(SEED, (Stage(0.05, 100, 0),))
    with pytest.raises(ValueError, match="overlap"):
        twin_shift_uniformity_check(spec, 1, RegionQuery(0.5, 0.5, 0.1, 0.1), 400, 5)
    spec = ProcessSpec(SEED, (Stage(0.3, 100, 0),))
    with pytest.raises(ValueError, match="container"):
        twin_shift_uniformity_check(spec, 1, RegionQuery(0.5, 0.5, 0.1, 0.1, container_side=0.3), 400, 5)


# --- discrepancy -----------------------------------------------------------------

def test_discrepancy_single_point():
    for m in (2, 8, 64):
        assert rectangle_discrepancy([(0.5, 0.5)], "grid", m).value >= 1 - 2 / m - 1 / m ** 2
    assert rectangle_discrepancy([(0.5, 0.5)], "exact").value == 1.0


def test_discrepancy_regular_grid():
    m = 16
    res = rectangle_discrepancy(stats.regular_grid(m), "grid", m)
    assert res.value <= 2 / m + 1 / m ** 2
    assert rectangle_discrepancy(stats.regular_grid(m), "exact").value <= 2 / m + 1 / m ** 2


def test_discrepancy_errors():
    with pytest.raises(ValueError):
        rectangle_discrepancy([(0.5, 0.5)], "grid", 1)
    with pytest.raises(ValueError):
        rectangle_discrepancy(np.random.default_rng(0).random((501, 2)), "exact")
    with pytest.raises(ValueError):
        rectangle_discrepancy([(0.5, 0.5)], "wavelet")


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(unit, unit), min_size=1, max_size=7))
def test_exact_matches_brute(pts):
    assert rectangle_discrepancy(pts, "exact").value == pytest.approx(stats.brute_discrepancy(pts), abs=1e-12)


def test_exact_matches_brute_with_ties():
    pts = [(0.25, 0.5), (0.25, 0.75), (0.5, 0.5), (0.0, 0.0), (0.5, 0.25)]
    assert rectangle_discrepancy(pts, "exact").value == pytest.approx(stats.brute_discrepancy(pts), abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 60))
def test_grid_monotone_and_below_exact(seed, n):
    pts = np.random.default_rng(seed).random((n, 2))
    vals = [rectangle_discrepancy(pts, "grid", m).value for m in (4, 8, 16)]
    assert vals[0] <= vals[1] + 1e-15 and vals[1] <= vals[2] + 1e-15
    assert vals[2] <= rectangle_discrepancy(pts, "exact").value + 1e-12


def test_kronecker_below_iid():
    n = 4096
    k = rectangle_discrepancy(process.kronecker_sequence(n=n), "grid", 64).value
    iid = [rectangle_discrepancy(process.segment(ProcessSpec(s), 0, 0, n - 1), "grid", 64).value
           for s in range(20)]
    assert k < np.median(iid)
