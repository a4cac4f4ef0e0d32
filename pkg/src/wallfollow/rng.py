"""Deterministic pseudo-random numbers for every stochastic step in the package.

All randomness flows through one documented pipeline so that runs are
bit-reproducible across platforms:

* ``splitmix64`` -- 64-bit mixing function, used to expand master seeds into
  per-component seeds and to initialise generator state.
* ``Xoshiro256StarStar`` -- scalar xoshiro256** generator, used for shuffles,
  bootstrap draws and other index-level randomness.
* ``XoshiroLanes`` -- a fixed-width bank of xoshiro256** generators stepped in
  lockstep with numpy, used where bulk draws are needed (weight init, dropout
  masks, per-epoch shuffle keys).  Outputs are ordered step-major: the first
  ``LANES`` values are step 0 of lanes 0..LANES-1, and so on.

Derived seeds use ``derive_seed(base, index) = splitmix64(base ^ index)``.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

# Lane count is part of the output stream definition; changing it changes
# every bulk draw, so it is frozen here.
LANES = 512


def splitmix64(x: int) -> int:
    """One splitmix64 step: mix ``x + GOLDEN`` down to a 64-bit output."""
    z = (x + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


def splitmix64_stream(seed: int, count: int) -> list[int]:
    """First ``count`` outputs of the splitmix64 sequence started at ``seed``."""
    out = []
    state = seed & MASK64
    for _ in range(count):
        state = (state + GOLDEN) & MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        out.append((z ^ (z >> 31)) & MASK64)
    return out


def derive_seed(base: int, index: int) -> int:
    """Child seed for sub-stream ``index`` of ``base`` (e.g. CV iterations)."""
    return splitmix64((base ^ index) & MASK64)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Xoshiro256StarStar:
    """Scalar xoshiro256** generator seeded via splitmix64 expansion."""

    def __init__(self, seed: int):
        s = splitmix64_stream(seed, 4)
        if not any(s):  # all-zero state is the one forbidden configuration
            s[0] = GOLDEN
        self._s = s

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def random(self) -> float:
        """Uniform double in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * 2.0**-53

    def below(self, n: int) -> int:
        """Unbiased integer in [0, n) by rejection sampling."""
        if n <= 0:
            raise ValueError("bound must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def shuffle(self, items) -> None:
        """In-place Fisher-Yates shuffle (descending index convention)."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample_indices(self, n: int, k: int) -> list[int]:
        """k distinct indices from range(n), via partial Fisher-Yates."""
        if not 0 <= k <= n:
            raise ValueError("need 0 <= k <= n")
        pool = list(range(n))
        for i in range(k):
            j = i + self.below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]


class XoshiroLanes:
    """Bank of ``LANES`` xoshiro256** generators stepped together with numpy.

    Lane ``l`` is seeded from splitmix64 outputs ``4*l .. 4*l+3`` of the
    stream started at ``seed``, so the whole bank is a pure function of the
    seed.  Bulk draws read the lanes step-major and truncate to the amount
    requested; the unread remainder of the final step is discarded.
    """

    def __init__(self, seed: int, lanes: int = LANES):
        words = splitmix64_stream(seed, 4 * lanes)
        state = np.array(words, dtype=np.uint64).reshape(lanes, 4).T.copy()
        dead = ~state.any(axis=0)
        if dead.any():
            state[0, dead] = np.uint64(GOLDEN)
        self._s = state  # shape (4, lanes)
        self.lanes = lanes

    def _next_block(self) -> np.ndarray:
        s0, s1, s2, s3 = self._s
        five = np.uint64(5)
        nine = np.uint64(9)
        r = s1 * five
        result = ((r << np.uint64(7)) | (r >> np.uint64(57))) * nine
        t = s1 << np.uint64(17)
        s2 = s2 ^ s0
        s3 = s3 ^ s1
        s1 = s1 ^ s2
        s0 = s0 ^ s3
        s2 = s2 ^ t
        s3 = (s3 << np.uint64(45)) | (s3 >> np.uint64(19))
        self._s = np.stack([s0, s1, s2, s3])
        return result

    def u64(self, count: int) -> np.ndarray:
        blocks = -(-count // self.lanes)
        out = np.empty((blocks, self.lanes), dtype=np.uint64)
        for b in range(blocks):
            out[b] = self._next_block()
        return out.reshape(-1)[:count]

    def doubles(self, shape) -> np.ndarray:
        """Uniform doubles in [0, 1), row-major over ``shape``."""
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        count = int(np.prod(shape)) if shape else 1
        u = self.u64(count)
        return ((u >> np.uint64(11)).astype(np.float64) * 2.0**-53).reshape(shape)

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        return low + (high - low) * self.doubles(shape)

    def permutation(self, n: int) -> np.ndarray:
        """Deterministic permutation of range(n) by sorting random keys."""
        keys = self.doubles(n)
        return np.argsort(keys, kind="stable")
