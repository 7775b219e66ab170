"""Deterministic 64-bit pseudo-random generator (xoshiro256**).

Every stochastic operation in the package draws from this generator so that
results are bit-reproducible for a given seed on any platform, independent of
numpy's own generator internals.  The algorithms are:

* state update: xoshiro256** (Blackman & Vigna), 4 x 64-bit words
* seeding: SplitMix64 expansion of a single 64-bit seed
* doubles: top 53 bits of a draw, scaled by 2**-53, uniform in [0, 1)
* bounded ints: modulo with rejection of the biased low range (unbiased)
* normals: Box-Muller transform of two uniform draws
* gumbels: -log(-log(u)) with u clamped away from {0, 1}
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = ["Rng"]

_U64 = np.uint64
_MASK = _U64(0xFFFFFFFFFFFFFFFF)


@njit(cache=True)
def _splitmix64(z):
    z = (z + _U64(0x9E3779B97F4A7C15)) & _MASK
    z = ((z ^ (z >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)) & _MASK
    z = ((z ^ (z >> _U64(27))) * _U64(0x94D049BB133111EB)) & _MASK
    return z ^ (z >> _U64(31))


@njit(cache=True)
def _seed_state(seed):
    state = np.empty(4, dtype=np.uint64)
    z = _U64(seed)
    for i in range(4):
        z = (z + _U64(0x9E3779B97F4A7C15)) & _MASK
        t = z
        t = ((t ^ (t >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)) & _MASK
        t = ((t ^ (t >> _U64(27))) * _U64(0x94D049BB133111EB)) & _MASK
        state[i] = t ^ (t >> _U64(31))
    return state


@njit(cache=True, inline="always")
def _rotl(x, k):
    return ((x << k) | (x >> (_U64(64) - k))) & _MASK


@njit(cache=True, inline="always")
def _next_u64(state):
    result = (_rotl((state[1] * _U64(5)) & _MASK, _U64(7)) * _U64(9)) & _MASK
    t = (state[1] << _U64(17)) & _MASK
    state[2] ^= state[0]
    state[3] ^= state[1]
    state[1] ^= state[2]
    state[0] ^= state[3]
    state[2] ^= t
    state[3] = _rotl(state[3], _U64(45))
    return result


@njit(cache=True, inline="always")
def _next_double(state):
    return (_next_u64(state) >> _U64(11)) * 1.1102230246251565e-16  # 2**-53


@njit(cache=True, inline="always")
def _next_below(state, n):
    # unbiased integer in [0, n): reject draws below 2**64 mod n
    un = _U64(n)
    threshold = (_U64(0) - un) % un
    u = _next_u64(state)
    while u < threshold:
        u = _next_u64(state)
    return u % un


@njit(cache=True)
def _fill_uniform(state, out):
    for i in range(out.size):
        out[i] = _next_double(state)


@njit(cache=True)
def _fill_normal(state, out):
    n = out.size
    i = 0
    while i < n:
        u1 = 1.0 - _next_double(state)  # (0, 1], keeps log finite
        u2 = _next_double(state)
        r = np.sqrt(-2.0 * np.log(u1))
        out[i] = r * np.cos(6.283185307179586 * u2)
        if i + 1 < n:
            out[i + 1] = r * np.sin(6.283185307179586 * u2)
        i += 2


@njit(cache=True)
def _fill_integers(state, n, out):
    for i in range(out.size):
        out[i] = np.int64(_next_below(state, n))


@njit(cache=True)
def _shuffle(state, arr):
    # Fisher-Yates, back to front
    for i in range(arr.size - 1, 0, -1):
        j = np.int64(_next_below(state, i + 1))
        tmp = arr[i]
        arr[i] = arr[j]
        arr[j] = tmp


@njit(cache=True)
def _sample_indices(state, n, m):
    """m distinct indices drawn uniformly from [0, n), order of acceptance.

    Rejection sampling keeps the cost O(m) for small fractions; a partial
    Fisher-Yates pass handles dense draws where rejection would thrash.
    """
    out = np.empty(m, dtype=np.int64)
    if m == 0:
        return out
    if m * 2 >= n:
        pool = np.arange(n)
        for i in range(m):
            j = i + np.int64(_next_below(state, n - i))
            tmp = pool[i]
            pool[i] = pool[j]
            pool[j] = tmp
            out[i] = pool[i]
        return out
    seen = np.zeros(n, dtype=np.uint8)
    count = 0
    while count < m:
        j = np.int64(_next_below(state, n))
        if seen[j] == 0:
            seen[j] = 1
            out[count] = j
            count += 1
    return out


class Rng:
    """Seeded xoshiro256** stream with the handful of draws the package needs."""

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.state = _seed_state(_U64(self.seed))

    def child(self, index: int) -> "Rng":
        """Derived independent stream: fold (seed, index) through SplitMix64."""
        mixed = _splitmix64(_U64((self.seed ^ ((index + 1) * 0x9E3779B97F4A7C15)) & 0xFFFFFFFFFFFFFFFF))
        return Rng(int(mixed))

    def u64(self) -> int:
        return int(_next_u64(self.state))

    def uniform(self) -> float:
        return float(_next_double(self.state))

    def below(self, n: int) -> int:
        if n <= 0:
            raise ValueError("below() needs n >= 1")
        return int(_next_below(self.state, _U64(n)))

    def uniforms(self, shape) -> np.ndarray:
        out = np.empty(int(np.prod(shape)), dtype=np.float64)
        _fill_uniform(self.state, out)
        return out.reshape(shape)

    def normals(self, shape) -> np.ndarray:
        out = np.empty(int(np.prod(shape)), dtype=np.float64)
        _fill_normal(self.state, out)
        return out.reshape(shape)

    def gumbels(self, shape) -> np.ndarray:
        u = np.clip(self.uniforms(shape), 1e-300, 1.0 - 1e-16)
        return -np.log(-np.log(u))

    def integers(self, n: int, size: int) -> np.ndarray:
        out = np.empty(size, dtype=np.int64)
        _fill_integers(self.state, n, out)
        return out

    def shuffle(self, arr: np.ndarray) -> None:
        if arr.ndim != 1:
            raise ValueError("shuffle() expects a 1-d array")
        _shuffle(self.state, arr)

    def permutation(self, n: int) -> np.ndarray:
        out = np.arange(n, dtype=np.int64)
        _shuffle(self.state, out)
        return out

    def sample_indices(self, n: int, m: int) -> np.ndarray:
        """m distinct indices, uniform over all size-m subsets of range(n)."""
        if not 0 <= m <= n:
            raise ValueError(f"cannot draw {m} distinct indices from {n}")
        return _sample_indices(self.state, n, m)
