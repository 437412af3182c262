"""Seed derivation and random generators.

Child seeds are derived from a root seed with the splitmix64 finalizer applied
to the root mixed with each key in turn, so ``derive_seed(s, "fig1", 3)`` is a
pure function of its arguments. Generators are numpy Philox (counter based);
standard normals come from numpy's ziggurat sampler.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    x = (x + _GOLDEN) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def _key_to_int(key: int | str) -> int:
    if isinstance(key, str):
        return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little")
    return int(key) & _MASK


def derive_seed(root: int, *keys: int | str) -> int:
    """Deterministic 64-bit child seed of ``root`` for the given key path."""
    s = splitmix64(int(root) & _MASK)
    for k in keys:
        s = splitmix64(s ^ _key_to_int(k))
    return s


def make_rng(seed: int, *keys: int | str) -> np.random.Generator:
    s = derive_seed(seed, *keys) if keys else int(seed) & _MASK
    return np.random.Generator(np.random.Philox(s))
