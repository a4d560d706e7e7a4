"""Deterministic sub-seed derivation.

Every stochastic component derives its own stream from a single global
64-bit seed by stable hashing of (seed, component name, indices...).
The derivation uses SHA-256, so it is identical across platforms,
processes and parallelism degrees.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["derive", "rng"]


def derive(seed: int, *parts) -> int:
    """64-bit sub-seed for the stream named by ``parts`` under ``seed``."""
    tag = ":".join([str(int(seed))] + [str(p) for p in parts])
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def rng(seed: int, *parts) -> np.random.Generator:
    """Generator for the derived sub-seed."""
    return np.random.default_rng(derive(seed, *parts))
