"""Counter-based random streams.

Every randomized routine takes an explicit ``seed`` and derives its
generator from a Philox key built out of ``(seed, stream)``, so the draws
of one cell in a sweep never depend on how many other cells ran before it.
"""
import numpy as np


def make_rng(seed=0, stream=0):
    """Return a ``numpy.random.Generator`` keyed by ``(seed, stream)``."""
    if isinstance(seed, np.random.Generator):
        return seed
    key = np.array([int(seed) & 0xFFFFFFFFFFFFFFFF,
                    int(stream) & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
