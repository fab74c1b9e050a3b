"""Deterministic seed derivation.

Every stochastic component in the engine draws from a numpy Generator whose
seed is derived here. Derivation goes through SHA-256 so that per-item seeds
are stable across platforms, Python versions, and process counts (worker
fan-out must not change any output byte).
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(base: int, *scope: object) -> int:
    """Mix a base seed with a scope path ("sft", 17, ...) into a 64-bit seed."""
    text = str(int(base)) + "".join(f"/{part}" for part in scope)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def rng_for(base: int, *scope: object) -> np.random.Generator:
    """A PCG64 generator seeded from the derived scope seed."""
    return np.random.Generator(np.random.PCG64(derive_seed(base, *scope)))
