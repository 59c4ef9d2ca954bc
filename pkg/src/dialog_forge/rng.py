"""Tiny deterministic PRNG with a portable integer-only implementation.

Oracle backends draw through this generator rather than a platform RNG so
that any conforming implementation of the agent wire protocol (in any
language) can reproduce responses bit-for-bit from the same seed. The
core is splitmix64; all arithmetic is exact 64-bit.
"""

from __future__ import annotations

import hashlib

_MASK64 = (1 << 64) - 1
_MASK53 = (1 << 53) - 1


def stable_seed(*parts: object) -> int:
    """Collapse arbitrary labels into a seed, stably across runs.

    Clamped to 53 bits so seeds survive JSON number round-trips in every
    wire-protocol implementation (IEEE-754 doubles hold 53 bits exactly).
    """
    text = ":".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") & _MASK53


class SplitMix64:
    """splitmix64 stream; ``randrange`` maps draws to [0, n) by modulo."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def randrange(self, n: int) -> int:
        if n <= 0:
            raise ValueError("randrange needs n >= 1")
        return self.next_u64() % n

    def choice(self, seq):
        return seq[self.randrange(len(seq))]

    def random(self) -> float:
        # 53-bit mantissa, matching the usual double-precision convention.
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))
