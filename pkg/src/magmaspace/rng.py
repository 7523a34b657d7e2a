"""Counter-based SplitMix64 streams.

Every random draw in the package is ``mix64(key + (k + 1) * GAMMA)`` for a
stream key and a draw counter ``k``.  Stream keys are derived from the
config seed and a path of integers (e.g. magma index), so any block of draws
can be produced independently and in any order: results never depend on the
number of worker threads.

Constants are those of the reference SplitMix64 (Steele, Lea, Flood 2014).
"""
from __future__ import annotations

import numpy as np

MASK = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    z &= MASK
    z = ((z ^ (z >> 30)) * _M1) & MASK
    z = ((z ^ (z >> 27)) * _M2) & MASK
    return z ^ (z >> 31)


def stream_key(seed: int, *path: int) -> int:
    """Derive a 64-bit stream key from a seed and an integer path."""
    h = mix64((seed & MASK) ^ GAMMA)
    for p in path:
        h = mix64((h + GAMMA * ((p & MASK) + 1)) & MASK)
    return h


def draws(key: int, count: int, start: int = 0) -> np.ndarray:
    """``count`` raw uint64 draws from stream ``key``, beginning at counter ``start``."""
    k = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(key) + k * np.uint64(GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
        z = z ^ (z >> np.uint64(31))
    return z


def integers(key: int, count: int, high: int, start: int = 0) -> np.ndarray:
    """Integers in ``[0, high)`` by modular reduction (bias below high / 2**64)."""
    return (draws(key, count, start) % np.uint64(high)).astype(np.int64)


def uniform(key: int, count: int, start: int = 0) -> np.ndarray:
    """Floats in ``[0, 1)`` from the top 53 bits."""
    return (draws(key, count, start) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
