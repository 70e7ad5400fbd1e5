"""Seeding rules.

Every random draw in aasgen comes from numpy's PCG64 generator. Seeds are
unsigned 64-bit integers and are split as follows:

* trajectory ``i`` of a batch with master seed ``m`` uses seed ``m ^ i``;
* a trajectory seed feeds two independent child streams, ``latent`` (the
  initial Gaussian latent) and ``sampler`` (all perturbation noise), derived
  with ``SeedSequence(seed, spawn_key=(k,))``.

Prompt construction uses ``default_rng(seed)`` directly.
"""

from __future__ import annotations

import numpy as np

U64_MASK = (1 << 64) - 1

LATENT_STREAM = 0
SAMPLER_STREAM = 1


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= U64_MASK:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def split_seed(master: int, index: int) -> int:
    return check_seed(master) ^ (int(index) & U64_MASK)


def stream(seed: int, which: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(check_seed(seed), spawn_key=(which,))))


def latent_rng(seed: int) -> np.random.Generator:
    return stream(seed, LATENT_STREAM)


def sampler_rng(seed: int) -> np.random.Generator:
    return stream(seed, SAMPLER_STREAM)


def initial_latent(seed: int, dim: int) -> np.ndarray:
    """Draw ``z_T ~ N(0, I)`` for a trajectory seed."""
    return latent_rng(seed).standard_normal(dim)
