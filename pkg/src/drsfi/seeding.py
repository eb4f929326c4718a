"""Deterministic seeding utilities.

All randomness in the package flows through numpy's Philox counter-based
bit generator, keyed by 64-bit seeds derived with a splitmix64 chain. That
keeps every artifact (batches, models, error maps, campaign runs)
reproducible from a single base seed.
"""

import numpy as np

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def mix(*parts: int) -> int:
    """Stable 64-bit hash of an integer tuple (order-sensitive)."""
    h = 0
    for p in parts:
        h = _splitmix64(h ^ (int(p) & _MASK64))
    return h


def philox(seed: int) -> np.random.Generator:
    """Counter-based generator for a 64-bit seed."""
    return np.random.Generator(np.random.Philox(key=seed & _MASK64))
