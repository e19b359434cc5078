"""Re-sparsification of an SDDM splitting by effective-resistance sampling.

The splitting M = D - A is rewritten as a graph Laplacian plus exact
diagonal bookkeeping:

    M = (X + Y + deg(A_off)) - (A_off + Y)
      = X + [deg(A_off) - A_off]  (+ Y folded into both sides)

where Y = diag(A) and X = D - Y - deg(A_off) >= 0 is the row slack.  Only
the Laplacian part is sampled: q edges are drawn with replacement with
probability proportional to weight times effective resistance, rescaled
by 1/(q p_e), and duplicates are merged by count.  X and Y are carried
over exactly, so the output row slack equals X entry for entry.

Effective resistances come from a pluggable oracle.  The default oracle
computes the dense pseudoinverse of the Laplacian part, which restricts
it to desk-scale inputs; a plugin callable can replace it for anything
larger.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph

from .core import DiagMatrix, SddmSplitting, SymSparseMatrix
from .streams import STREAM_SPARSIFY, stream

__all__ = [
    "DEFAULT_GENERAL_OVERSAMPLE",
    "ORACLE_LIMIT",
    "ResistanceOracle",
    "SparsifyFailure",
    "effective_resistance",
    "general_sample_count",
    "sparsify_splitting",
]

DEFAULT_GENERAL_OVERSAMPLE = 4.0   # C_g, shared scale with the clique step
ORACLE_LIMIT = 4096


class SparsifyFailure(RuntimeError):
    """Sampling produced an invalid splitting (retry with another seed)."""


def general_sample_count(n: int, eps: float, oversample: float) -> int:
    """With-replacement edge draws for the whole-matrix sparsifier."""
    return int(math.ceil(oversample * n * math.log(max(n, 2)) / (eps * eps)))


def _realized_laplacian(m: SymSparseMatrix) -> SymSparseMatrix:
    """Interpret a symmetric matrix as a Laplacian.

    Matrices with any negative off-diagonal entry are taken as realized
    Laplacians already; otherwise the input is a weighted adjacency and
    the Laplacian deg(W) - W is formed.
    """
    rows, cols, vals = m.triples()
    off = rows != cols
    if vals[off].size and vals[off].min() < 0.0:
        return m
    w = SymSparseMatrix._from_arrays(m.dim, rows[off], cols[off], vals[off], _checked=True)
    return SymSparseMatrix._from_arrays(
        m.dim,
        np.concatenate([rows[off], np.arange(m.dim, dtype=np.int64)]),
        np.concatenate([cols[off], np.arange(m.dim, dtype=np.int64)]),
        np.concatenate([-vals[off], w.row_sums()]),
        _checked=True,
    )


def _component_labels(lap: SymSparseMatrix) -> np.ndarray:
    pattern = sp.csr_matrix(
        (np.ones_like(lap.data), lap.indices, lap.indptr), shape=(lap.dim, lap.dim))
    _, labels = csgraph.connected_components(pattern, directed=False)
    return labels


@dataclass
class ResistanceOracle:
    """Effective resistances of vertex pairs in a Laplacian.

    ``exact-dense`` mode computes the pseudoinverse densely and caches it
    per matrix; ``plugin`` mode defers to a callable
    ``plugin(laplacian, rows, cols) -> resistances``.
    """

    mode: str = "exact-dense"
    limit: int = ORACLE_LIMIT
    plugin: Callable | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.mode not in ("exact-dense", "plugin"):
            raise ValueError(f"unknown oracle mode {self.mode!r}")
        if self.mode == "plugin" and self.plugin is None:
            raise ValueError("plugin mode requires a callable")

    def _pinv(self, lap: SymSparseMatrix) -> np.ndarray:
        key = id(lap)
        hit = self._cache.get(key)
        if hit is None:
            if lap.dim > self.limit:
                raise ValueError(f"dense oracle refused for n={lap.dim} > {self.limit}")
            hit = np.linalg.pinv(lap.to_dense(), hermitian=True)
            self._cache = {key: hit}  # keep at most one matrix resident
        return hit

    def resistances(self, lap: SymSparseMatrix, rows: np.ndarray,
                    cols: np.ndarray) -> np.ndarray:
        if self.mode == "plugin":
            return np.asarray(self.plugin(lap, rows, cols), dtype=np.float64)
        pinv = self._pinv(lap)
        d = np.diagonal(pinv)
        return d[rows] + d[cols] - 2.0 * pinv[rows, cols]


def effective_resistance(oracle: ResistanceOracle, lap: SymSparseMatrix,
                         v: int, w: int) -> float:
    """Resistance (e_v - e_w)^T L^+ (e_v - e_w); infinite across components."""
    if v == w:
        raise ValueError("effective resistance requires distinct vertices")
    realized = _realized_laplacian(lap)
    labels = _component_labels(realized)
    if labels[v] != labels[w]:
        raise ValueError(f"vertices {v} and {w} lie in different components")
    out = oracle.resistances(realized, np.asarray([v]), np.asarray([w]))
    return float(out[0])


def sparsify_splitting(s: SddmSplitting, eps: float, seed: int = 0, *,
                       oversample: float = DEFAULT_GENERAL_OVERSAMPLE,
                       oracle: ResistanceOracle | None = None,
                       keep_if_small: bool = True) -> SddmSplitting:
    """Resample the Laplacian part of M = D - A down to ~q edges.

    Returns the input object unchanged when its stored entry count is
    already within a factor two of the sample budget (sampling could not
    shrink it).  Raises ``SparsifyFailure`` if sampling strands a vertex
    with a zero diagonal; callers retry with a fresh seed.
    """
    if not (0.0 < eps <= 0.5):
        raise ValueError(f"eps must lie in (0, 1/2], got {eps}")
    n = s.dim
    q = general_sample_count(n, eps, oversample)
    if keep_if_small and s.a.nnz <= 2 * q:
        return s

    y = s.a.diagonal()
    a_off = s.a.offdiagonal()
    x = s.d.values - y - a_off.row_sums()
    tol = 1e-12 * np.maximum(s.d.values, 1.0)
    if np.any(x < -tol):
        bad = int(np.argmin(x))
        raise ValueError(f"input splitting violates dominance at row {bad}")
    x = np.maximum(x, 0.0)

    rows, cols, vals = a_off.triples()
    up = rows < cols
    erow, ecol, ew = rows[up], cols[up], vals[up]
    if erow.size == 0:
        return s

    lap = _realized_laplacian(a_off)
    resist = (oracle or ResistanceOracle()).resistances(lap, erow, ecol)
    mass = ew * resist
    cum = np.cumsum(mass)
    total = cum[-1]

    rng = stream(seed, STREAM_SPARSIFY)
    draws = np.searchsorted(cum, rng.random(q) * total, side="right")
    draws = np.minimum(draws, erow.size - 1)
    counts = np.bincount(draws, minlength=erow.size)
    hit = counts > 0
    # w_e * c_e / (q p_e) with p_e = mass_e / total; the count ratio is a
    # separate factor so the single-edge case rescales to the original
    # weight bit for bit
    w_hat = ew[hit] * ((counts[hit] * total) / (float(q) * mass[hit]))

    a_hat = SymSparseMatrix.from_triplets(n, erow[hit], ecol[hit], w_hat, mirror=True)
    a_hat = a_hat.add_diagonal(y)
    d_hat = x + a_hat.row_sums()
    if n and d_hat.min() <= 0.0:
        raise SparsifyFailure("sampling stranded a vertex with zero diagonal")
    return SddmSplitting(DiagMatrix(d_hat), a_hat)
