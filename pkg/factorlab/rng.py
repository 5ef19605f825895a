"""Seeded generators for reproducible simulations.

Every run, sample or synthetic draw gets its own generator derived from the
master seed and a path of integer indices, so results never depend on the
order in which workers happen to execute.
"""

import numpy as np

_SEED_MASK = (1 << 64) - 1


def derive(seed, *path):
    """Create the generator for one (seed, path) pair.

    Args:
        seed: Master seed (any integer; taken modulo 2**64)
        *path: Non-negative integers identifying the consumer, e.g. a run index

    Returns:
        numpy.random.Generator
    """
    entropy = [int(seed) & _SEED_MASK]
    for index in path:
        if index < 0:
            raise ValueError(f"RNG path indices must be non-negative, got {index}")
        entropy.append(int(index))
    return np.random.default_rng(np.random.SeedSequence(entropy))
