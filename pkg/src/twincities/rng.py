"""Counter-based random values.

Every random quantity in the package is a pure function of a 64-bit seed and
one or more integer counters, computed with the SplitMix64 finalizer.  No
generator state is carried between calls, so values can be produced at any
index (including negative ones) in any order.
"""
from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / float(1 << 53)

MASK64 = (1 << 64) - 1
DEFAULT_SEED = 20141221


def _u64(v) -> np.ndarray:
    a = np.asarray(v)
    if a.dtype == np.uint64:
        return a
    if a.dtype.kind == "u" or a.dtype.kind == "i":
        return a.astype(np.int64).view(np.uint64) if a.dtype.kind == "i" else a.astype(np.uint64)
    # python ints outside int64 range land here as object arrays
    return np.asarray(np.vectorize(lambda z: int(z) & MASK64, otypes=[object])(a),
                      dtype=np.uint64)


def mix64(z) -> np.ndarray:
    z = _u64(z).copy()
    with np.errstate(over="ignore"):
        z ^= z >> np.uint64(30)
        z *= _M1
        z ^= z >> np.uint64(27)
        z *= _M2
        z ^= z >> np.uint64(31)
    return z


def hash_keys(seed, *keys) -> np.ndarray:
    """Fold integer keys into a seed; broadcasts over array keys."""
    h = mix64(_u64(seed) ^ _GOLDEN)
    for k in keys:
        with np.errstate(over="ignore"):
            h = mix64(h + _u64(k) * _GOLDEN + _GOLDEN)
    return h


def uniform01(seed, *keys) -> np.ndarray:
    """Uniform doubles in [0, 1) with 53 random bits."""
    return (hash_keys(seed, *keys) >> np.uint64(11)).astype(np.float64) * _INV53


def randint(seed, modulus, *keys) -> np.ndarray:
    """Integers in [0, modulus).  Modulo bias is below modulus / 2**64."""
    return (hash_keys(seed, *keys) % _u64(modulus)).astype(np.int64)


def derive_seed(master, *keys) -> int:
    return int(hash_keys(master, *keys))


def derive_seeds(master, count: int, *keys) -> np.ndarray:
    return hash_keys(master, *keys, np.arange(count, dtype=np.int64))
