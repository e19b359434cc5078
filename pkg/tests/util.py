"""Shared helpers for building random test instances."""

from __future__ import annotations

import numpy as np

from invchain.core import DiagMatrix, SddmSplitting, SymSparseMatrix


def random_sddm(rng: np.random.Generator, n: int, *, density: float = 0.35,
                with_diag: bool = False, slack_low: float = 0.05,
                slack_high: float = 1.0) -> SddmSplitting:
    """Random SDDM splitting with strict row dominance."""
    mask = np.triu(rng.random((n, n)) < density, k=1)
    a = np.zeros((n, n))
    a[mask] = rng.uniform(0.1, 2.0, size=int(mask.sum()))
    a = a + a.T
    if with_diag:
        didx = rng.random(n) < 0.5
        a[didx, didx] = rng.uniform(0.1, 1.0, size=int(didx.sum()))
    row = a.sum(axis=1)
    d = row * (1.0 + rng.uniform(slack_low, slack_high, size=n)) + rng.uniform(0.05, 0.2, size=n)
    return SddmSplitting(DiagMatrix(d), SymSparseMatrix.from_dense(a))


def random_connected_adjacency(rng: np.random.Generator, n: int, *,
                               extra_edge_prob: float = 0.15,
                               w_low: float = 1.0, w_high: float = 10.0) -> SymSparseMatrix:
    """Random connected weighted graph: random spanning tree plus extras."""
    rows, cols = [], []
    order = rng.permutation(n)
    for k in range(1, n):
        rows.append(order[k])
        cols.append(order[rng.integers(0, k)])
    iu, ju = np.triu_indices(n, k=1)
    extra = rng.random(iu.size) < extra_edge_prob
    rows = np.concatenate([np.asarray(rows, dtype=np.int64), iu[extra]])
    cols = np.concatenate([np.asarray(cols, dtype=np.int64), ju[extra]])
    vals = rng.uniform(w_low, w_high, size=rows.size)
    return SymSparseMatrix.from_triplets(n, rows, cols, vals, mirror=True)


def mnorm(m: np.ndarray, x: np.ndarray) -> float:
    return float(np.sqrt(x @ (m @ x)))
