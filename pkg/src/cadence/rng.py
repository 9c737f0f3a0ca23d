"""Counter-based deterministic random number generation.

All stochastic behavior in this package flows through :class:`SplitMix64`,
a counter-based generator: output ``i`` is a pure function of ``(seed, i)``,
so streams can be forked, replayed, and resumed without carrying mutable
state around. Arrays are produced with vectorized uint64 arithmetic, which
keeps large draws cheap.
"""

from __future__ import annotations

import numpy as np

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INV_2_53 = float(2.0**-53)


def _mix(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer on a uint64 array (wrapping arithmetic)."""
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def _mix_scalar(x: int) -> int:
    arr = np.array([x & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    return int(_mix(arr)[0])


class SplitMix64:
    """Seedable counter-based RNG with independent forkable streams.

    ``u64(n)`` returns the next ``n`` raw words; ``uniform``/``normal`` build
    on it. ``fork(tag)`` derives an unrelated stream, used to give every
    training step / sampled sequence its own reproducible randomness.
    """

    def __init__(self, seed: int, counter: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.counter = int(counter)

    def fork(self, tag: int) -> "SplitMix64":
        """Derive an independent stream; same (seed, tag) -> same stream."""
        return SplitMix64(_mix_scalar(self.seed ^ _mix_scalar(tag ^ 0xA5A5A5A55A5A5A5A)))

    def state(self) -> tuple[int, int]:
        return (self.seed, self.counter)

    @classmethod
    def from_state(cls, state) -> "SplitMix64":
        seed, counter = state
        return cls(seed, counter)

    def u64(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        words = _mix((np.uint64(self.seed) + idx * _GOLDEN) & _MASK)
        return words

    def randint(self, lo: int, hi: int, size=None) -> np.ndarray | int:
        """Integers in [lo, hi) via 64-bit modulo (bias < 2**-50 at desk scale)."""
        if hi <= lo:
            raise ValueError(f"empty range [{lo}, {hi})")
        n = int(np.prod(size)) if size is not None else 1
        words = self.u64(n)
        vals = lo + (words % np.uint64(hi - lo)).astype(np.int64)
        if size is None:
            return int(vals[0])
        return vals.reshape(size)

    def uniform(self, size=None) -> np.ndarray | float:
        """Uniform floats in [0, 1) with 53-bit resolution."""
        n = int(np.prod(size)) if size is not None else 1
        u = (self.u64(n) >> np.uint64(11)).astype(np.float64) * _INV_2_53
        if size is None:
            return float(u[0])
        return u.reshape(size)

    def normal(self, size=None) -> np.ndarray | float:
        """Standard normals via Box-Muller on paired uniforms."""
        n = int(np.prod(size)) if size is not None else 1
        m = (n + 1) // 2
        words = self.u64(2 * m)
        # u1 in (0, 1] so log is finite; u2 in [0, 1)
        u1 = ((words[:m] >> np.uint64(11)).astype(np.float64) + 1.0) * _INV_2_53
        u2 = (words[m:] >> np.uint64(11)).astype(np.float64) * _INV_2_53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        if size is None:
            return float(z[0])
        return z.reshape(size)
