"""Deterministic seed splitting.

Every stochastic stage draws from its own stream derived from one root seed,
so a single integer reproduces a full run and stages never share state.
"""

import numpy as np

# Stream identifiers; append only, never renumber.
MASK = 1
WEIGHTS = 2
KMEANS = 3
CORPUS = 4


def stage_rng(seed: int, stream: int, *extra: int) -> np.random.Generator:
    """Return a generator for ``stream`` (plus optional sub-indices) under ``seed``."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream), *map(int, extra)]))
