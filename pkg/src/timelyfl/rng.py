"""Seed handling.

Every random stream is derived from a 64-bit master seed and a tuple of
non-negative integer stream ids::

    substream(seed, *ids) = Generator(PCG64(SeedSequence(seed, spawn_key=ids)))

so a (seed, ids) pair always yields the same stream no matter in which
order or on which worker it is created.
"""

from __future__ import annotations

import numpy as np

SEED_MAX = 2**64 - 1

# stream ids used across the package
STREAM_SIM = 0
STREAM_SWEEP = 1
STREAM_FL_TASK = 2
STREAM_FL_SELECT = 3
STREAM_FL_SGD = 4


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def substream(seed: int, *ids: int) -> np.random.Generator:
    seq = np.random.SeedSequence(check_seed(seed), spawn_key=tuple(int(i) for i in ids))
    return np.random.Generator(np.random.PCG64(seq))
