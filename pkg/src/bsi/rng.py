"""Seedable, platform-portable random generator for the synthesizers.

The core stream is splitmix64: the 64-bit state advances by the constant
0x9E3779B97F4A7C15 and each output is the finalizer

    z ^= z >> 30; z *= 0xBF58476D1CE4E5B9
    z ^= z >> 27; z *= 0x94D049BB133111EB
    z ^= z >> 31

(all mod 2^64).  Uniform doubles take the top 53 bits; normals come from
the Box-Muller transform (pairs, one cached); Gamma variates use the
Marsaglia-Tsang squeeze (shape >= 1, boosted from shape + 1 otherwise)
and Inverse-Gamma variates are beta / Gamma(alpha, scale=1).  Every draw
is a pure function of the seed, so runs are bit-reproducible across
platforms and library versions.
"""

from __future__ import annotations

import math

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """splitmix64 stream with uniform / normal / gamma / inverse-gamma draws."""

    def __init__(self, seed: int):
        self._state = int(seed) & _MASK
        self._cached_normal = None

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * 2.0 ** -53

    def uniform_open(self) -> float:
        """Uniform double in (0, 1], safe as a log argument."""
        return ((self.next_u64() >> 11) + 1) * 2.0 ** -53

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection from the 64-bit stream."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def normal(self) -> float:
        """Standard normal via Box-Muller; draws two, caches one."""
        if self._cached_normal is not None:
            value, self._cached_normal = self._cached_normal, None
            return value
        u1 = self.uniform_open()
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        self._cached_normal = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def gamma(self, shape: float) -> float:
        """Gamma(shape, scale=1) via Marsaglia-Tsang rejection."""
        if shape <= 0:
            raise ValueError("shape must be positive")
        if shape < 1.0:
            # boost: Gamma(a) = Gamma(a + 1) * U^(1/a)
            return self.gamma(shape + 1.0) * self.uniform_open() ** (1.0 / shape)
        d = shape - 1.0 / 3.0
        c = 1.0 / math.sqrt(9.0 * d)
        while True:
            x = self.normal()
            t = 1.0 + c * x
            if t <= 0.0:
                continue
            v = t * t * t
            u = self.uniform_open()
            if u < 1.0 - 0.0331 * x * x * x * x:
                return d * v
            if math.log(u) < 0.5 * x * x + d * (1.0 - v + math.log(v)):
                return d * v

    def inverse_gamma(self, alpha: float, beta: float) -> float:
        """Inverse-Gamma(alpha, beta) as beta / Gamma(alpha, scale=1)."""
        if alpha <= 0 or beta <= 0:
            raise ValueError("alpha and beta must be positive")
        return beta / self.gamma(alpha)
