"""Deterministic random number generation.

All stochastic code paths (initialization, sampling, augmentation) draw from
a counter-based Philox generator so runs reproduce bit-for-bit across
platforms. The algorithm name and seed travel in run/checkpoint metadata.
"""

from __future__ import annotations

import numpy as np

RNG_ALGORITHM = "philox4x64"


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def spawn_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent deterministic stream derived from (seed, *stream)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, *stream))))


def rng_metadata(seed: int) -> dict:
    return {"algorithm": RNG_ALGORITHM, "seed": int(seed)}
