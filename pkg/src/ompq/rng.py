"""Pinned pseudorandom generator for reproducible synthetic data.

The toy-network formats promise bit-identical regeneration from a seed, in any
language, so the generator is fixed here rather than delegated to a host
library: xoshiro256++ (Blackman/Vigna), state seeded with four successive
outputs of splitmix64 applied to the u64 seed. Uniform doubles take the top 53
bits, standard normals come from the Marsaglia polar transform. The exact
consumption order is part of the contract and is documented in FORMATS.md.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ValidationError

_M64 = (1 << 64) - 1
_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
_TO_UNIT = 2.0**-53


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _M64


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; returns (output, next_state)."""
    state = (state + _SPLITMIX_GAMMA) & _M64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31), state


class Xoshiro256pp:
    """xoshiro256++ stream with splitmix64 seeding.

    :param seed: unsigned 64-bit integer selecting the stream.
    """

    def __init__(self, seed: int):
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise ValidationError(f"seed must be a nonnegative integer, got {seed!r}")
        state = seed & _M64
        words = []
        for _ in range(4):
            out, state = splitmix64(state)
            words.append(out)
        # The all-zero state is the one fixed point of the recurrence; splitmix
        # cannot reach it from any seed in practice, guarded anyway.
        if not any(words):
            words[0] = 1
        self._s = words
        self._spare: float | None = None

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[0] + s[3]) & _M64, 23) + s[0]) & _M64
        t = (s[1] << 17) & _M64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def uniform01(self) -> float:
        """Next double in [0, 1): top 53 bits of the next u64."""
        return (self.next_u64() >> 11) * _TO_UNIT

    def normal(self) -> float:
        """Next standard-normal variate (Marsaglia polar, spare cached)."""
        if self._spare is not None:
            z = self._spare
            self._spare = None
            return z
        while True:
            u = 2.0 * self.uniform01() - 1.0
            v = 2.0 * self.uniform01() - 1.0
            s = u * u + v * v
            if 0.0 < s < 1.0:
                break
        m = math.sqrt(-2.0 * math.log(s) / s)
        self._spare = v * m
        return u * m

    def uniforms(self, n: int) -> np.ndarray:
        return np.array([self.uniform01() for _ in range(n)], dtype=np.float64)

    def normals(self, n: int) -> np.ndarray:
        return np.array([self.normal() for _ in range(n)], dtype=np.float64)

    def normal_matrix(self, rows: int, cols: int) -> np.ndarray:
        """Row-major matrix of standard normals (the documented fill order)."""
        return self.normals(rows * cols).reshape(rows, cols)
