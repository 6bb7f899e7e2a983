"""Deterministic seeded PRNG shared by the optimizer, harness, and synthetic sources."""

from __future__ import annotations

from citybus._kernels import (
    fnv1a64,
    splitmix64_bounded,
    splitmix64_bytes,
    splitmix64_fill_bounded,
    splitmix64_next,
)

_MASK64 = 0xFFFFFFFFFFFFFFFF


class SplitMix64:
    """SplitMix64 sequence with rejection-sampled uniform ranges.

    Identical seeds yield identical draw sequences on every platform and
    with either kernel backend.
    """

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    @property
    def state(self) -> int:
        return self._state

    def next_u64(self) -> int:
        self._state, value = splitmix64_next(self._state)
        return value

    def randrange(self, bound: int) -> int:
        """Uniform integer in [0, bound)."""
        self._state, value = splitmix64_bounded(self._state, bound)
        return value

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi], both ends inclusive."""
        if hi < lo:
            raise ValueError(f"empty range [{lo}, {hi}]")
        return lo + self.randrange(hi - lo + 1)

    def fill_bounded(self, bound: int, count: int) -> list[int]:
        """`count` uniform integers in [0, bound) in one batched call."""
        self._state, values = splitmix64_fill_bounded(self._state, bound, count)
        return values

    def bytes(self, count: int) -> bytes:
        self._state, data = splitmix64_bytes(self._state, count)
        return data

    def random(self) -> float:
        """Uniform float in [0, 1) with 53-bit resolution."""
        return (self.next_u64() >> 11) * 2.0**-53

    def spawn(self, label: str) -> "SplitMix64":
        """Independent child generator derived from this one and a label."""
        return SplitMix64(self.next_u64() ^ fnv1a64(label.encode("utf-8")))
