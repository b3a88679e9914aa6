"""Deterministic random stream derivation.

Every consumer of randomness gets its own counter-based Philox stream keyed by
(base_seed, replication, purpose). Streams are independent of scheduling order,
so replication fan-out across workers reproduces the sequential results bit for
bit, and changing how one purpose draws (say, the xi sampler) leaves the other
streams untouched.
"""
from __future__ import annotations

import numpy as np

# purpose tags; keep values stable, they are part of the reproducibility contract
WAIT = 0  # event waiting times
SELECT = 1  # which agent acts, and how
FLIP = 2  # switch/stay coin flips
XI = 3  # noise-trade sizes
HERD_NOISE = 4  # Brownian driver of the excitement equation
PRICE_NOISE = 5  # Brownian driver of the price equation
INIT_STATE = 6  # initial 0/1 configuration
INIT_PRICE = 7  # initial price / initial-value resampling


def stream(base_seed: int, replication: int, purpose: int) -> np.random.Generator:
    """Philox generator for one (seed, replication, purpose) cell."""
    if base_seed < 0 or replication < 0:
        raise ValueError("base_seed and replication must be non-negative")
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence((base_seed, replication, purpose)))
    )
