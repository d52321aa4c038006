"""Deterministic random number generation for simulation.

Uses the splitmix64 generator: a 64-bit counter stream passed through a
fixed avalanche mix. It is tiny, fast enough in pure Python, and trivially
portable, so a seed printed in a report reproduces the same trace anywhere.
The stdlib Mersenne Twister is deliberately not used here; its float and
Gaussian draw sequences are harder to pin down in a wire-format contract.

Stream discipline matters for reproducibility: ``normal()`` always consumes
exactly two draws (no cached spare), so consumers can account for draw
counts per event.
"""

from __future__ import annotations

import math

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_DOUBLE_UNIT = 2.0 ** -53


def mix64(z: int) -> int:
    """Finalizing mix of splitmix64 (also usable as a standalone hash)."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(master: int, key: int) -> int:
    """Derive an independent child seed from a master seed and an index.

    Children of distinct keys land in unrelated regions of the stream, so
    per-beacon substreams do not overlap in practice.
    """
    if key < 0:
        raise ValueError("derive_seed key must be non-negative")
    return mix64((master & _MASK) ^ (((key + 1) * _GAMMA) & _MASK))


class SplitMix64:
    """Seeded generator producing u64s, floats, ints and normal deviates."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK
        return mix64(self._state)

    def random(self) -> float:
        """Uniform float in [0, 1) using the top 53 bits of one draw."""
        return (self.next_u64() >> 11) * _DOUBLE_UNIT

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi], inclusive. Consumes one draw."""
        if hi < lo:
            raise ValueError(f"empty range [{lo}, {hi}]")
        return lo + self.next_u64() % (hi - lo + 1)

    def normal(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        """Standard Box-Muller transform. Always consumes two draws.

        The sine-branch partner variate is discarded rather than cached so
        that every call costs the same number of underlying draws.
        """
        u1 = self.random() or _DOUBLE_UNIT  # log(0) guard, keeps draw count fixed
        u2 = self.random()
        return mu + sigma * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
