"""Geometry of the unit square and the flat torus.

Points are stored canonically in [0, 1)^2.  Every distance function accepts
either :class:`TorusPoint` values or array-likes of shape ``(..., 2)`` and
broadcasts over leading axes.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


def _canon(v):
    v = np.mod(v, 1.0)
    # np.mod(-tiny, 1.0) rounds to 1.0
    return np.where(v >= 1.0, 0.0, v)


@dataclass(frozen=True)
class TorusPoint:
    x: float
    y: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(_canon(self.x)))
        object.__setattr__(self, "y", float(_canon(self.y)))

    def __iter__(self):
        yield self.x
        yield self.y

    def __array__(self, dtype=None, copy=None):
        return np.array([self.x, self.y], dtype=dtype)

    def to_list(self):
        return [self.x, self.y]


class Metric(str, enum.Enum):
    EUCLIDEAN = "euclidean"
    TORUS = "torus"
    FREE = "free"

    @property
    def code(self) -> int:
        return _CODES[self]

    @classmethod
    def parse(cls, value) -> "Metric":
        if isinstance(value, Metric):
            return value
        key = str(value).lower()
        aliases = {"e": "euclidean", "t": "torus", "free_boundary": "free",
                   "freeboundary": "free", "b": "free"}
        return cls(aliases.get(key, key))


_CODES = {Metric.EUCLIDEAN: 0, Metric.TORUS: 1, Metric.FREE: 2}


def as_points(points) -> np.ndarray:
    """Coerce a point collection to a float ``(n, 2)`` array in [0, 1)^2."""
    if isinstance(points, TorusPoint):
        return np.asarray(points)[None, :]
    if isinstance(points, np.ndarray):
        arr = points.astype(float, copy=False)
    else:
        arr = np.array([list(p) for p in points], dtype=float)
    arr = arr.reshape(-1, 2)
    return _canon(arr)


def _xy(p):
    a = np.asarray(p, dtype=float)
    return a[..., 0], a[..., 1]


def euclidean_distance(a, b):
    ax, ay = _xy(a)
    bx, by = _xy(b)
    return np.hypot(ax - bx, ay - by)


def torus_distance(a, b):
    ax, ay = _xy(a)
    bx, by = _xy(b)
    dx = np.abs(ax - bx)
    dy = np.abs(ay - by)
    dx = np.minimum(dx, 1.0 - dx)
    dy = np.minimum(dy, 1.0 - dy)
    return np.hypot(dx, dy)


def dist_to_boundary(p):
    x, y = _xy(p)
    return np.minimum(np.minimum(x, 1.0 - x), np.minimum(y, 1.0 - y))


def free_boundary_distance(a, b):
    """Unit-square distance where travel along the boundary is free.

    The boundary is one connected zero-cost set, so the best route either
    goes straight or walks to the boundary and back in from it.
    """
    return np.minimum(euclidean_distance(a, b),
                      dist_to_boundary(a) + dist_to_boundary(b))


_DISTANCES = {
    Metric.EUCLIDEAN: euclidean_distance,
    Metric.TORUS: torus_distance,
    Metric.FREE: free_boundary_distance,
}


def distance(a, b, metric=Metric.TORUS):
    return _DISTANCES[Metric.parse(metric)](a, b)


def distance_matrix(points, metric=Metric.TORUS) -> np.ndarray:
    pts = as_points(points)
    return distance(pts[:, None, :], pts[None, :, :], metric)


def translate(p, eps):
    """Shift the first coordinate by ``eps`` modulo 1."""
    if isinstance(p, TorusPoint):
        return TorusPoint(p.x + eps, p.y)
    arr = np.array(p, dtype=float)
    arr[..., 0] = _canon(arr[..., 0] + eps)
    return arr
