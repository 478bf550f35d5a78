"""Deterministic pseudo-randomness built on SplitMix64.

Every random draw in this package (profile bits, weight init, epoch
shuffles) goes through this module, so a fixed seed reproduces datasets
and checkpoints bit-for-bit on any platform.  SplitMix64 is a three-line
mixer with published constants; quality is ample for data synthesis and
it costs nothing to port.
"""

from __future__ import annotations

import math

MASK64 = (1 << 64) - 1

_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_STREAM_SALT = 0xA24BAED4963EE407

_TWO_PI = 2.0 * math.pi
_INV_2POW53 = 2.0 ** -53


class Rng:
    """SplitMix64 generator with a single 64-bit word of state.

    Two generators constructed from the same state produce identical
    streams.  ``clone()`` gives value semantics when a caller needs to
    branch without disturbing the original.
    """

    __slots__ = ("state",)

    def __init__(self, state: int):
        self.state = state & MASK64

    def clone(self) -> "Rng":
        return Rng(self.state)

    def next_u64(self) -> int:
        s = (self.state + _GAMMA) & MASK64
        self.state = s
        z = s
        z = ((z ^ (z >> 30)) * _MIX1) & MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & MASK64
        return z ^ (z >> 31)

    def next_unit(self) -> float:
        """Uniform float in [0, 1): the top 53 bits of one u64 draw."""
        return (self.next_u64() >> 11) * _INV_2POW53

    def next_gaussian(self) -> float:
        """One standard normal via Box-Muller; the sine partner is discarded.

        u1 is redrawn if it comes out exactly 0 so the log is finite.
        """
        u1 = self.next_unit()
        while u1 == 0.0:
            u1 = self.next_unit()
        u2 = self.next_unit()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(_TWO_PI * u2)

    def __repr__(self) -> str:
        return f"Rng(state=0x{self.state:016X})"


def derive_stream(seed: int, index: int) -> Rng:
    """Independent generator for sample ``index`` under ``seed``.

    The raw word ``seed XOR index * salt`` is passed through one
    SplitMix64 step so that nearby indices land on unrelated states.
    Parallel dataset builders each call this with their own index, which
    makes the result independent of evaluation order.
    """
    raw = (seed & MASK64) ^ ((index * _STREAM_SALT) & MASK64)
    return Rng(Rng(raw).next_u64())
