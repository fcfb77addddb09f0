"""Seed handling.

All randomness flows from explicit seeds. A task seed is derived from the
master seed by the counter scheme ``SeedSequence(master, spawn_key=key)``
where ``key`` is a tuple of non-negative integers naming the task (for
example ``(grid_index, replicate)``). No global RNG state is used.
"""
from __future__ import annotations

import numpy as np


def seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, (tuple, list)):
        return derive(seed[0], *seed[1:])
    return np.random.SeedSequence(int(seed))


def derive(master, *key: int) -> np.random.SeedSequence:
    """Seed for the task named ``key`` under ``master``."""
    base = seed_sequence(master)
    return np.random.SeedSequence(base.entropy, spawn_key=tuple(base.spawn_key) + tuple(int(k) for k in key))


def seed_id(seed) -> tuple:
    """Hashable identity of a seed stream, used to detect shared streams."""
    ss = seed_sequence(seed)
    return (ss.entropy, tuple(ss.spawn_key))


def generator(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_sequence(seed)))


def bit_generator(seed) -> np.random.PCG64:
    return np.random.PCG64(seed_sequence(seed))
