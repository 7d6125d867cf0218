"""Named random sub-streams derived from a single 64-bit master seed.

Every consumer of randomness receives its own ``numpy.random.Generator``
built from ``SeedSequence(seed, spawn_key=...)``. The spawn key is a fixed
hash of the stream's name path, so streams are independent of the order in
which they are requested and of process boundaries.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def _key(part) -> int:
    if isinstance(part, (int, np.integer)) and not isinstance(part, bool):
        return int(part) & 0xFFFFFFFF
    digest = hashlib.blake2b(str(part).encode("utf-8"), digest_size=4).digest()
    return int.from_bytes(digest, "little")


def seed_sequence(seed: int, *names) -> np.random.SeedSequence:
    # strings and ints are hashed separately so ("a", 1) != ("a", "1")
    spawn_key = tuple((_key(n) << 1) | int(isinstance(n, str)) for n in names)
    return np.random.SeedSequence(int(seed) & MASK64, spawn_key=spawn_key)


def derive_rng(seed: int, *names) -> np.random.Generator:
    """Generator for the sub-stream ``names`` of master ``seed``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *names)))


def derive_seed(seed: int, *names) -> int:
    """A 64-bit integer seed for the sub-stream ``names``."""
    state = seed_sequence(seed, *names).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)
