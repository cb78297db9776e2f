"""Deterministic seeding utilities built on splitmix64.

Every random artifact in the package (gear table, boundary marker, workload
token pools, synthetic KV rows) is derived from a 64-bit seed through this
module, so a run is reproducible from a single seed.
"""

from __future__ import annotations

MASK64 = 0xFFFFFFFFFFFFFFFF

_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def splitmix64_next(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; returns (output, new_state)."""
    state = (state + _GAMMA) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    z = z ^ (z >> 31)
    return z, state


class SplitMix64:
    """Tiny deterministic 64-bit generator (splitmix64 reference sequence)."""

    def __init__(self, seed: int):
        self._state = seed & MASK64

    def next_u64(self) -> int:
        out, self._state = splitmix64_next(self._state)
        return out

    def fill(self, n: int) -> list[int]:
        return [self.next_u64() for _ in range(n)]


def derive_seed(seed: int, *labels: int) -> int:
    """Derive an independent 64-bit stream seed from (seed, labels).

    Used to give each submodule (pools, headers, bodies, noise) its own
    stream without correlated draws.
    """
    state = seed & MASK64
    for label in labels:
        state ^= label & MASK64
        state, _ = splitmix64_next(state)
    return state
