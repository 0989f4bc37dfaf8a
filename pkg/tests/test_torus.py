import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from twincities.torus import (Metric, TorusPoint, distance, distance_matrix, euclidean_distance,
                              free_boundary_distance, torus_distance, translate)

from oracles import DIST

ONE_MINUS = math.nextafter(1.0, 0.0)
coord = st.floats(0.0, 1.0, exclude_max=True, allow_nan=False)
point = st.tuples(coord, coord)


def test_torus_point_canonical():
    p = TorusPoint(1.25, -0.25)
    assert (p.x, p.y) == (0.25, 0.75)
    assert TorusPoint(-1e-20, 1.0).x == 0.0
    assert TorusPoint(0.3, 1.0).y == 0.0


@pytest.mark.parametrize("a,b,expected", [
    ((0, 0), (0.999999, 0.999999), 1.4142121),
    ((0.3, 0.4), (0.3, 0.4), 0.0),
    ((0, 0), (0.3, 0.4), 0.5),
])
def test_euclidean_examples(a, b, expected):
    assert euclidean_distance(TorusPoint(*a), TorusPoint(*b)) == pytest.approx(expected, abs=1e-6)


@pytest.mark.parametrize("a,b,expected", [
    ((0.9, 0), (0.1, 0), 0.2),
    ((0, 0), (0.5, 0.5), math.sqrt(0.5)),
    ((0.2, 0.3), (0.2, 0.3), 0.0),
])
def test_torus_examples(a, b, expected):
    assert torus_distance(TorusPoint(*a), TorusPoint(*b)) == pytest.approx(expected, abs=1e-9)


def test_free_boundary_examples():
    assert free_boundary_distance((0.05, 0.5), (0.95, 0.5)) == pytest.approx(0.1, abs=1e-9)
    assert free_boundary_distance((0.5, 0.5), (0.5, 0.6)) == pytest.approx(0.1, abs=1e-9)
    assert free_boundary_distance((0.0, 0.3), (ONE_MINUS, 0.7)) < 1e-12


@pytest.mark.parametrize("p,eps,expected", [
    ((0.8, 0.3), 0.5, (0.3, 0.3)),
    ((0.1, 0.9), 0.0, (0.1, 0.9)),
    ((0.25, 0.5), 0.25, (0.5, 0.5)),
])
def test_translate_examples(p, eps, expected):
    q = translate(TorusPoint(*p), eps)
    assert isinstance(q, TorusPoint)
    assert (q.x, q.y) == pytest.approx(expected, abs=1e-12)


def test_translate_array_keeps_y():
    pts = np.array([[0.9, 0.1], [0.2, 0.7]])
    out = translate(pts, 0.15)
    assert out[:, 1].tolist() == [0.1, 0.7]
    assert out[:, 0] == pytest.approx([0.05, 0.35])


def test_metric_parse():
    assert Metric.parse("TORUS") is Metric.TORUS
    assert Metric.parse("free_boundary") is Metric.FREE
    assert [m.code for m in Metric] == [0, 1, 2]
    with pytest.raises(ValueError):
        Metric.parse("manhattan")


@given(point, point)
def test_pairwise_sandwich(a, b):
    dB, dT, dE = (distance(a, b, m) for m in (Metric.FREE, Metric.TORUS, Metric.EUCLIDEAN))
    assert dB <= dT + 1e-12
    assert dT <= dE + 1e-12


@given(point, point, st.floats(0.0, 1.0, exclude_max=True))
def test_torus_translation_isometry(a, b, eps):
    before = torus_distance(a, b)
    after = torus_distance(translate(np.array(a), eps), translate(np.array(b), eps))
    assert after == pytest.approx(before, abs=1e-12)


@given(point, point)
def test_symmetry_and_identity(a, b):
    for m in Metric:
        assert distance(a, b, m) == pytest.approx(distance(b, a, m), abs=1e-12)
        assert distance(a, a, m) == 0.0


@given(point, point)
def test_matches_oracle(a, b):
    for m in Metric:
        assert distance(a, b, m) == pytest.approx(DIST[m.value](a, b), abs=1e-12)


def test_distance_matrix():
    pts = np.random.default_rng(0).random((7, 2))
    for m in Metric:
        D = distance_matrix(pts, m)
        assert np.allclose(D, D.T)
        assert np.all(np.diag(D) == 0)
        assert D[2, 5] == pytest.approx(DIST[m.value](pts[2], pts[5]), abs=1e-12)
