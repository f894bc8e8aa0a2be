"""Counter-based random streams built on the SplitMix64 finalizer.

Draw ``c`` of the stream with key ``k`` is ``mix64(k + (c + 1) * GAMMA)``,
i.e. the ``c``-th output of a SplitMix64 generator seeded with ``k``.
Because a draw depends only on ``(key, counter)``, trajectory ``i`` of an
ensemble can be simulated on any thread, in any order, and still consume
exactly the same numbers.  Keys are themselves SplitMix64 outputs of the
(mixed) master seed, indexed by trajectory.

The same arithmetic is provided three ways: Python ints (scalar streams
used by the reference protocols), numpy ``uint64`` arrays (vectorized
kernels) and numba scalars (compiled kernels, see :mod:`measprep.kernels`).
"""

from __future__ import annotations

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GAMMA = 0x9E3779B97F4A7C15
MUL1 = 0xBF58476D1CE4E5B9
MUL2 = 0x94D049BB133111EB
TO_UNIT = 2.0 ** -53


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * MUL1) & MASK64
    z = ((z ^ (z >> 27)) * MUL2) & MASK64
    return z ^ (z >> 31)


def stream_key(master_seed: int, index: int) -> int:
    """Key of the ``index``-th stream derived from ``master_seed``."""
    return mix64(mix64(master_seed) + (index + 1) * GAMMA)


def draw_uint64(key: int, counter: int) -> int:
    return mix64(key + (counter + 1) * GAMMA)


def draw_uniform(key: int, counter: int) -> float:
    """Uniform double in [0, 1) with 53 random bits."""
    return (draw_uint64(key, counter) >> 11) * TO_UNIT


class RandomStream:
    """Sequential view on one counter-based stream."""

    def __init__(self, key: int, counter: int = 0):
        self.key = key & MASK64
        self.counter = counter

    @classmethod
    def from_seed(cls, master_seed: int, index: int = 0) -> RandomStream:
        return cls(stream_key(master_seed, index))

    def uniform(self) -> float:
        u = draw_uniform(self.key, self.counter)
        self.counter += 1
        return u

    def __repr__(self) -> str:
        return f"RandomStream(key={self.key:#018x}, counter={self.counter})"


# --- numpy vectorized versions (uint64 arithmetic wraps silently on arrays)

_U30 = np.uint64(30)
_U27 = np.uint64(27)
_U31 = np.uint64(31)
_U11 = np.uint64(11)


def mix64_array(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> _U30)) * np.uint64(MUL1)
    z = (z ^ (z >> _U27)) * np.uint64(MUL2)
    return z ^ (z >> _U31)


def stream_keys(master_seed: int, n: int, start: int = 0) -> np.ndarray:
    """Keys of streams ``start .. start+n-1`` as a uint64 array."""
    base = np.uint64(mix64(master_seed))
    idx = np.arange(start + 1, start + n + 1, dtype=np.uint64)
    return mix64_array(base + idx * np.uint64(GAMMA))


def draw_uniform_array(keys: np.ndarray, counters: np.ndarray) -> np.ndarray:
    c = np.asarray(counters).astype(np.uint64) + np.uint64(1)
    bits = mix64_array(np.asarray(keys, dtype=np.uint64) + c * np.uint64(GAMMA))
    return (bits >> _U11).astype(np.float64) * TO_UNIT
