"""Keyed, reproducible random streams.

Every random decision in the toolkit draws from a :class:`Stream` obtained
through :func:`substream`. A stream is a PCG64 bit generator seeded by a
NumPy ``SeedSequence`` whose spawn key is derived from the caller's keys
(class index, clip id, noise kind, ...). Keys are hashed with SHA-256, so the
stream for a given ``(seed, *keys)`` never depends on iteration order or on
how many other streams were opened before it.

Only raw 64-bit outputs are taken from NumPy. The distributions built on top
of them are implemented here so that the full draw sequence is pinned down by
this module and not by the internals of ``numpy.random.Generator``:

* ``uniform``: top 53 bits scaled by 2**-53.
* ``randbelow``: bitmask rejection sampling.
* ``sample``: partial Fisher-Yates shuffle.
* ``normal``: Box-Muller, cosine branch only.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np

MAX_SEED = 2**64 - 1


def _key_to_int(key: int | str) -> int:
    if isinstance(key, (int, np.integer)) and not isinstance(key, bool):
        if key < 0:
            raise ValueError(f"stream keys must be non-negative, got {key}")
        return int(key)
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


class Stream:
    """A single reproducible random stream."""

    def __init__(self, seed: int, keys: tuple[int, ...] = ()):
        seq = np.random.SeedSequence(entropy=check_seed(seed), spawn_key=keys)
        self._bits = np.random.PCG64(seq)

    def next_u64(self) -> int:
        return int(self._bits.random_raw())

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        u = (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)
        return low + (high - low) * u

    def randbelow(self, n: int) -> int:
        if n <= 0:
            raise ValueError("randbelow needs n > 0")
        if n == 1:
            return 0
        shift = 64 - (n - 1).bit_length()
        while True:
            r = self.next_u64() >> shift
            if r < n:
                return r

    def sample(self, n: int, k: int) -> list[int]:
        """Return ``k`` distinct indices from ``range(n)``, uniformly."""
        if not 0 <= k <= n:
            raise ValueError(f"cannot sample {k} items from {n}")
        pool = list(range(n))
        for i in range(k):
            j = i + self.randbelow(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]

    def sign(self) -> int:
        return 1 if self.next_u64() >> 63 else -1

    def normal(self, mean: float = 0.0, std: float = 1.0) -> float:
        u1 = 1.0 - self.uniform()  # (0, 1]
        u2 = self.uniform()
        z = math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
        return mean + std * z


def substream(seed: int, *keys: int | str) -> Stream:
    """Open the stream identified by ``seed`` and an ordered tuple of keys."""
    return Stream(seed, tuple(_key_to_int(k) for k in keys))
