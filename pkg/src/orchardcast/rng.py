"""Deterministic seed derivation.

Every random decision in the pipeline draws from a generator keyed by
(seed, purpose tags). Tags are hashed with SHA-256 so derived streams are
stable across platforms and independent of each other, which is what makes
results reproducible regardless of thread count: workers never share a
generator, they each derive their own from the tags that name their job.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["derive_seed", "derive_rng"]

_MASK64 = (1 << 64) - 1


def derive_seed(seed: int, *tags: object) -> int:
    """Derive a 64-bit child seed from a root seed and purpose tags."""
    h = hashlib.sha256()
    h.update(str(int(seed) & _MASK64).encode("ascii"))
    for tag in tags:
        h.update(b"|")
        h.update(str(tag).encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "little")


def derive_rng(seed: int, *tags: object) -> np.random.Generator:
    """A fresh numpy Generator for the (seed, tags) stream."""
    return np.random.default_rng(derive_seed(seed, *tags))
