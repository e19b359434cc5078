"""Deterministic RNG streams keyed by (global seed, purpose, index).

Every randomized kernel draws from its own sub-stream, so results do not
depend on execution order or worker count.
"""

from __future__ import annotations

import numpy as np

STREAM_CLIQUE = 1
STREAM_SPARSIFY = 2
STREAM_ATTEMPT = 3
STREAM_GENERATE = 4
STREAM_LEVEL = 5

__all__ = ["stream", "STREAM_CLIQUE", "STREAM_SPARSIFY", "STREAM_ATTEMPT",
           "STREAM_GENERATE", "STREAM_LEVEL"]


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for (seed, key...); stable across worker counts."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)
