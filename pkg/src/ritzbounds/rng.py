"""Portable random numbers: xoshiro256++ seeded through SplitMix64.

The generator matches the published reference implementation, so a block
drawn from a given seed can be reproduced in any language.
"""
import math

import numpy as np

_MASK = (1 << 64) - 1


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & _MASK


def splitmix64(state):
    """One SplitMix64 step; returns ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


class Xoshiro256pp:
    """xoshiro256++ generator.

    Parameters
    ----------
    seed : int
        64-bit seed expanded into the 256-bit state by SplitMix64.

    Examples
    --------
    >>> Xoshiro256pp.from_state([1, 2, 3, 4]).next_u64()
    41943041
    """

    def __init__(self, seed: int = 0):
        sm = int(seed) & _MASK
        s = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            s.append(out)
        self.s = s

    @classmethod
    def from_state(cls, state):
        state = [int(w) & _MASK for w in state]
        if len(state) != 4 or not any(state):
            raise ValueError("state must be four words, not all zero")
        g = cls.__new__(cls)
        g.s = state
        return g

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self.s
        result = (_rotl((s0 + s3) & _MASK, 23) + s0) & _MASK
        t = (s1 << 17) & _MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.s = [s0, s1, s2, s3]
        return result

    def random(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def standard_normal(self, count: int) -> np.ndarray:
        """``count`` standard normals by the Box-Muller transform.

        Each pair of 64-bit outputs gives ``r cos(2 pi u2)`` then
        ``r sin(2 pi u2)`` with ``u1 = ((x1 >> 11) + 1) / 2^53`` in (0, 1].
        """
        out = np.empty(count)
        j = 0
        while j < count:
            u1 = ((self.next_u64() >> 11) + 1) * 2.0**-53
            u2 = (self.next_u64() >> 11) * 2.0**-53
            r = math.sqrt(-2.0 * math.log(u1))
            out[j] = r * math.cos(2.0 * math.pi * u2)
            if j + 1 < count:
                out[j + 1] = r * math.sin(2.0 * math.pi * u2)
            j += 2
        return out


def trial_seed(seed: int, trial: int) -> int:
    """Seed of trial ``trial`` in a run seeded with ``seed``."""
    return (int(seed) + int(trial)) & _MASK


def random_block(n: int, p: int, seed: int) -> np.ndarray:
    """Gaussian ``n x p`` block, filled column by column."""
    g = Xoshiro256pp(seed)
    return g.standard_normal(n * p).reshape((p, n)).T.copy()
