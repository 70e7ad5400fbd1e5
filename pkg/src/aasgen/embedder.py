"""Deterministic text embedding used in place of a pretrained text encoder.

The UTF-8 bytes of the prompt are hashed with SHA-256; the digest seeds a
PCG64 generator that draws a Gaussian vector, which is then scaled to unit
L2 norm. The map carries no semantic structure. It only guarantees
determinism, finiteness, and well-spread outputs for distinct prompts.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import DimensionMismatch


def embed(prompt_text: str, dimension: int) -> np.ndarray:
    if dimension < 1:
        raise ValueError(f"embedding dimension must be positive, got {dimension}")
    digest = hashlib.sha256(prompt_text.encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "little"))
    v = rng.standard_normal(dimension)
    norm = np.linalg.norm(v)
    while norm == 0.0:  # probability zero, kept so normalization is always defined
        v = rng.standard_normal(dimension)
        norm = np.linalg.norm(v)
    return v / norm


def embed_unconditional(dimension: int) -> np.ndarray:
    """Embedding of the empty prompt, used as the unconditional branch."""
    return embed("", dimension)


def check_embedding(values, dimension: int | None = None, name: str = "embedding") -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1:
        raise DimensionMismatch(f"{name} must be a vector, got shape {values.shape}")
    if dimension is not None and values.shape[0] != dimension:
        raise DimensionMismatch(f"{name} has dimension {values.shape[0]}, expected {dimension}")
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{name} contains non-finite entries")
    return values
