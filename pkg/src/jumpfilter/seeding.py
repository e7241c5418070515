"""Reproducible stream derivation from a single master seed.

Every random stream in the package is a ``numpy.random.Generator`` seeded by
``derive_seed(master_seed, replica_index, role)``, so jump randomness and
observation randomness are independently replayable, and replicas never share
a stream.

The mixing function is splitmix64 (Steele, Lea & Flood 2014): the master seed
is advanced once per key through

    z = (state + key * 0x9E3779B97F4A7C15) mod 2**64
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 mod 2**64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB mod 2**64
    state = z ^ (z >> 31)

and the final state is the derived 64-bit seed.
"""

from __future__ import annotations

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15

ROLE_JUMP = 1
ROLE_NOISE = 2

__all__ = ["derive_seed", "derive_rng", "splitmix64", "ROLE_JUMP", "ROLE_NOISE"]


def splitmix64(state: int, key: int) -> int:
    """One splitmix64 round: absorb ``key`` into ``state``."""
    z = (state + (key & MASK64) * GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


def derive_seed(master_seed: int, *keys: int) -> int:
    """Fold integer keys (replica index, stream role, ...) into a 64-bit seed."""
    state = master_seed & MASK64
    for key in keys:
        state = splitmix64(state, key + 1)
    return state


def derive_rng(master_seed: int, *keys: int) -> np.random.Generator:
    """Generator for the stream identified by ``keys`` under ``master_seed``."""
    return np.random.default_rng(derive_seed(master_seed, *keys))
