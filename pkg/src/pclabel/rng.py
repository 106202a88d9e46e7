"""Deterministic 64-bit RNG used for k-means initialization.

The generator is a splitmix64 sequence: the state advances by the golden
gamma 0x9E3779B97F4A7C15 and each output is the finalizer

    z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
    z ^= z >> 27;  z *= 0x94D049BB133111EB
    z ^= z >> 31

applied to the new state (all arithmetic mod 2**64).  Per-detection streams
are derived with :func:`derive_seed`, which folds integer fields into the
seed one at a time with the same finalizer, so any (seed, frame, camera,
detection) tuple maps to a fixed stream regardless of scheduling order.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def _mix(z: int) -> int:
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & _MASK64
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & _MASK64
    z ^= z >> 31
    return z


def derive_seed(seed: int, *fields: int) -> int:
    """Derive a stream seed by folding ``fields`` into ``seed``."""
    s = seed & _MASK64
    for f in fields:
        s = _mix(((s ^ (f & _MASK64)) + _GAMMA) & _MASK64)
    return s


class SplitMix64:
    """Seeded splitmix64 stream of 64-bit integers."""

    def __init__(self, seed: int) -> None:
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        return _mix(self._state)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n), bias-free via rejection sampling."""
        if n <= 0:
            raise ValueError("bound must be positive")
        limit = (_MASK64 + 1) - ((_MASK64 + 1) % n)
        while True:
            v = self.next_u64()
            if v < limit:
                return v % n

    def sample_distinct(self, n: int, k: int) -> list[int]:
        """k distinct indices drawn uniformly without replacement from [0, n)."""
        if k > n:
            raise ValueError(f"cannot sample {k} distinct values from {n}")
        chosen: list[int] = []
        seen: set[int] = set()
        while len(chosen) < k:
            i = self.below(n)
            if i not in seen:
                seen.add(i)
                chosen.append(i)
        return chosen
