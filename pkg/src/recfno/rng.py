"""Deterministic counter-based PRNG (splitmix64).

Every random draw in the package flows from one of these generators so that
runs are bit-reproducible from a single 64-bit seed, independent of platform
and of numpy version.  Child streams are derived from (seed, key...) rather
than from draw order, so adding a consumer never shifts another one.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_INV53 = float(2.0**-53)


def _mix_int(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def _mix_array(z: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer; uint64 array arithmetic wraps silently
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _fnv1a(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK
    return h


class Rng:
    """splitmix64 stream with vectorized draws."""

    def __init__(self, seed: int):
        self._seed = int(seed) & _MASK
        self._counter = 0

    @property
    def seed(self) -> int:
        return self._seed

    def derive(self, *keys: int | str) -> "Rng":
        """Independent child stream; depends only on (seed, keys)."""
        s = self._seed
        for key in keys:
            k = _fnv1a(key) if isinstance(key, str) else (int(key) & _MASK)
            s = _mix_int((s + _GOLDEN) ^ k)
        return Rng(_mix_int(s))

    def raw(self, n: int) -> np.ndarray:
        """n raw uint64 words."""
        base = (self._seed + self._counter * _GOLDEN) & _MASK
        self._counter += n
        idx = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(_GOLDEN)
        return _mix_array(np.uint64(base) + idx)

    def uniform(self, shape=None, low: float = 0.0, high: float = 1.0) -> np.ndarray | float:
        """Uniform in [low, high); scalar when shape is None."""
        scalar = shape is None
        n = 1 if scalar else int(np.prod(shape))
        u = (self.raw(n) >> np.uint64(11)).astype(np.float64) * _INV53
        out = low + (high - low) * u
        return float(out[0]) if scalar else out.reshape(shape)

    def normal(self, shape=None, mean: float = 0.0, std: float = 1.0) -> np.ndarray | float:
        """Standard-normal draws via Box-Muller."""
        scalar = shape is None
        n = 1 if scalar else int(np.prod(shape))
        m = (n + 1) // 2
        w = self.raw(2 * m)
        # u1 in (0, 1] so log() is finite; u2 in [0, 1)
        u1 = ((w[:m] >> np.uint64(11)).astype(np.float64) + 1.0) * _INV53
        u2 = (w[m:] >> np.uint64(11)).astype(np.float64) * _INV53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.empty(2 * m, dtype=np.float64)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        out = mean + std * z[:n]
        return float(out[0]) if scalar else out.reshape(shape)

    def integers(self, bound: int, shape=None) -> np.ndarray | int:
        """Uniform integers in [0, bound)."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        scalar = shape is None
        n = 1 if scalar else int(np.prod(shape))
        u = (self.raw(n) >> np.uint64(11)).astype(np.float64) * _INV53
        out = np.minimum((u * bound).astype(np.int64), bound - 1)
        return int(out[0]) if scalar else out.reshape(shape)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n)."""
        perm = np.arange(n)
        if n < 2:
            return perm
        js = self.raw(n - 1)
        for i in range(n - 1, 0, -1):
            j = int(js[n - 1 - i] % np.uint64(i + 1))
            perm[i], perm[j] = perm[j], perm[i]
        return perm
