"""Benchmark graph generators.

Specs are plain strings: ``path N``, ``grid2d WxH``,
``erdos-renyi N P``, ``random-regular N D``.  Random models are made
connected deterministically (given the seed) by augmenting across
components, and every generator rejects shapes that leave the solver
nothing to do (no edges).
"""

from __future__ import annotations

import numpy as np

from .core import SymSparseMatrix
from .reductions import GraphLaplacian
from .streams import STREAM_GENERATE, stream

__all__ = ["generate", "gen_path", "gen_grid2d", "gen_erdos_renyi", "gen_random_regular"]


def _weights(rng, count: int, w_low: float, w_high: float) -> np.ndarray:
    if w_low <= 0:
        raise ValueError("edge weights must be positive")
    if w_high < w_low:
        raise ValueError("weight range is inverted")
    if w_high == w_low:
        return np.full(count, float(w_low))
    return rng.uniform(w_low, w_high, size=count)


def _adjacency(n, rows, cols, weights) -> SymSparseMatrix:
    return SymSparseMatrix.from_triplets(n, rows, cols, weights, mirror=True)


def gen_path(n: int, *, seed: int = 0, w_low: float = 1.0, w_high: float = 1.0):
    if n < 2:
        raise ValueError("a path needs at least 2 vertices")
    rng = stream(seed, STREAM_GENERATE)
    idx = np.arange(n - 1, dtype=np.int64)
    return _adjacency(n, idx, idx + 1, _weights(rng, n - 1, w_low, w_high))


def gen_grid2d(width: int, height: int, *, seed: int = 0,
               w_low: float = 1.0, w_high: float = 1.0):
    if width < 1 or height < 1 or width * height < 2:
        raise ValueError(f"grid2d {width}x{height} has no edges")
    rng = stream(seed, STREAM_GENERATE)
    ids = np.arange(width * height, dtype=np.int64).reshape(height, width)
    rows = np.concatenate([ids[:, :-1].ravel(), ids[:-1, :].ravel()])
    cols = np.concatenate([ids[:, 1:].ravel(), ids[1:, :].ravel()])
    return _adjacency(width * height, rows, cols,
                      _weights(rng, rows.size, w_low, w_high))


def gen_erdos_renyi(n: int, p: float, *, seed: int = 0,
                    w_low: float = 1.0, w_high: float = 1.0):
    """G(n, p) augmented with cross-component edges until connected."""
    if n < 2:
        raise ValueError("need at least 2 vertices")
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"edge probability {p} outside [0, 1]")
    rng = stream(seed, STREAM_GENERATE)
    iu, ju = np.triu_indices(n, k=1)
    pick = rng.random(iu.size) < p
    rows, cols = list(iu[pick]), list(ju[pick])

    import scipy.sparse as sp
    import scipy.sparse.csgraph as csgraph
    while True:
        pattern = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        ncomp, labels = csgraph.connected_components(pattern, directed=False)
        if ncomp == 1:
            break
        # deterministic augmentation: bridge one random vertex of each
        # component to one of the next
        for comp in range(ncomp - 1):
            a = rng.choice(np.flatnonzero(labels == comp))
            b = rng.choice(np.flatnonzero(labels == comp + 1))
            rows.append(int(a))
            cols.append(int(b))
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    return _adjacency(n, rows, cols, _weights(rng, rows.size, w_low, w_high))


def gen_random_regular(n: int, d: int, *, seed: int = 0,
                       w_low: float = 1.0, w_high: float = 1.0):
    if n * d % 2 != 0 or d < 1 or d >= n:
        raise ValueError(f"no {d}-regular graph on {n} vertices exists")
    import networkx as nx
    rng = stream(seed, STREAM_GENERATE)
    for attempt in range(64):
        g = nx.random_regular_graph(d, n, seed=int(rng.integers(2 ** 31)))
        if nx.is_connected(g):
            edges = np.asarray(g.edges(), dtype=np.int64)
            return _adjacency(n, edges[:, 0], edges[:, 1],
                              _weights(rng, edges.shape[0], w_low, w_high))
    raise ValueError(f"could not draw a connected {d}-regular graph on {n} vertices")


def generate(spec: str, *, seed: int = 0, w_low: float = 1.0,
             w_high: float = 1.0) -> GraphLaplacian:
    """Build a connected weighted graph from a generator spec string."""
    parts = spec.split()
    if not parts:
        raise ValueError("empty generator spec")
    kind = parts[0].lower()
    try:
        if kind == "path":
            adj = gen_path(int(parts[1]), seed=seed, w_low=w_low, w_high=w_high)
        elif kind == "grid2d":
            w, h = parts[1].lower().split("x")
            adj = gen_grid2d(int(w), int(h), seed=seed, w_low=w_low, w_high=w_high)
        elif kind == "erdos-renyi":
            adj = gen_erdos_renyi(int(parts[1]), float(parts[2]), seed=seed,
                                  w_low=w_low, w_high=w_high)
        elif kind == "random-regular":
            adj = gen_random_regular(int(parts[1]), int(parts[2]), seed=seed,
                                     w_low=w_low, w_high=w_high)
        else:
            raise ValueError(f"unknown generator {kind!r}")
    except IndexError:
        raise ValueError(f"malformed generator spec {spec!r}") from None
    return GraphLaplacian(adj)
