"""Deterministic random-stream derivation.

Every stochastic routine in the package draws from a counter-based Philox
stream derived from an integer seed plus an integer key path (replicate
index, contrast index, ...).  Streams derived from distinct paths are
independent, and a fixed (seed, path) pair always yields the same stream,
so results are reproducible regardless of batching or evaluation order.
"""

from __future__ import annotations

import numpy as np


def seed_sequence(seed: int, *path: int) -> np.random.SeedSequence:
    """SeedSequence for the stream identified by ``seed`` and a key path."""
    return np.random.SeedSequence(entropy=seed, spawn_key=tuple(path))


def generator(seed: int, *path: int) -> np.random.Generator:
    """Philox generator for the stream identified by ``seed`` and a key path."""
    return np.random.Generator(np.random.Philox(seed_sequence(seed, *path)))
