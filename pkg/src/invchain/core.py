"""Symmetric sparse matrix carriers and row-parallel kernels.

Everything downstream (squaring, sparsification, chain building, solving)
works on three carriers:

* ``SymSparseMatrix``: a symmetric nonnegative-structure sparse matrix in
  canonical CSR form (columns sorted per row, duplicates summed, explicit
  zeros dropped).
* ``DiagMatrix``: a diagonal matrix stored as its value vector.
* ``SddmSplitting``: a pair (D, A) with D positive diagonal and A
  nonnegative symmetric representing the positive definite matrix D - A.

Matrices are immutable after construction, so they are safe to share
across worker threads.  The 1-D matvec kernel computes each output row as
an isolated segment reduction over that row's stored entries; the result
is therefore bit-identical for every worker count (only the assignment of
rows to workers changes, never the per-row arithmetic).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "DimensionMismatchError",
    "AsymmetricMatrixError",
    "DiagMatrix",
    "SymSparseMatrix",
    "SddmSplitting",
    "from_triplets",
    "matvec",
    "apply_halfcycle_factor",
]


class DimensionMismatchError(ValueError):
    """Operands have incompatible dimensions."""


class AsymmetricMatrixError(ValueError):
    """Input entries do not describe a symmetric matrix."""


def _as_float_vector(v, dim: int | None = None) -> np.ndarray:
    v = np.ascontiguousarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionMismatchError(f"expected a 1-D vector, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise DimensionMismatchError(f"expected length {dim}, got {v.shape[0]}")
    return v


class DiagMatrix:
    """Diagonal matrix stored as its entry vector."""

    __slots__ = ("values",)

    def __init__(self, values):
        values = _as_float_vector(values)
        if not np.all(np.isfinite(values)):
            raise ValueError("diagonal entries must be finite")
        self.values = values
        self.values.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def require_positive(self, context: str = "diagonal") -> None:
        if self.dim and self.values.min() <= 0.0:
            bad = int(np.argmin(self.values))
            raise ValueError(f"{context} must be strictly positive, entry {bad} is {self.values[bad]}")

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v = _as_float_vector(v, self.dim)
        return self.values * v

    def inv_matvec(self, v: np.ndarray) -> np.ndarray:
        v = _as_float_vector(v, self.dim)
        if self.dim and self.values.min() == 0.0:
            raise ZeroDivisionError("zero diagonal entry")
        return v / self.values

    def to_dense(self) -> np.ndarray:
        return np.diag(self.values)

    def __eq__(self, other) -> bool:
        return isinstance(other, DiagMatrix) and np.array_equal(self.values, other.values)

    def __repr__(self) -> str:
        return f"DiagMatrix(dim={self.dim})"


def _canonical_arrays(n, rows, cols, vals):
    """Lexsort by (row, col), sum duplicates in stable order, drop zeros."""
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    cols = np.ascontiguousarray(cols, dtype=np.int64)
    vals = np.ascontiguousarray(vals, dtype=np.float64)
    if not (rows.shape == cols.shape == vals.shape) or rows.ndim != 1:
        raise ValueError("rows, cols, vals must be 1-D arrays of equal length")
    if rows.size:
        if rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= n:
            raise IndexError(f"triple index out of range for dimension {n}")
        order = np.lexsort((cols, rows))  # stable: duplicate order preserved
        rows, cols, vals = rows[order], cols[order], vals[order]
        new_key = np.empty(rows.size, dtype=bool)
        new_key[0] = True
        new_key[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
        starts = np.flatnonzero(new_key)
        rows, cols = rows[starts], cols[starts]
        vals = np.add.reduceat(vals, starts)
        keep = vals != 0.0
        if not keep.all():
            rows, cols, vals = rows[keep], cols[keep], vals[keep]
    if not np.all(np.isfinite(vals)):
        raise ValueError("matrix entries must be finite")
    return rows, cols, vals


class SymSparseMatrix:
    """Symmetric sparse matrix in canonical CSR form.

    Canonical means: per-row column indices strictly increasing, duplicate
    triples summed (stable input order), explicit zeros dropped.  Symmetry
    is asserted by exact transpose comparison at construction.
    """

    __slots__ = ("n", "indptr", "indices", "data")

    def __init__(self, n, indptr, indices, data, *, _checked: bool = False):
        self.n = int(n)
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        for a in (self.indptr, self.indices, self.data):
            a.setflags(write=False)
        if not _checked:
            self._assert_symmetric()

    # -- construction -------------------------------------------------

    @classmethod
    def _from_arrays(cls, n: int, rows, cols, vals, *, _checked: bool) -> "SymSparseMatrix":
        r, c, v = _canonical_arrays(n, rows, cols, vals)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(r, minlength=n), out=indptr[1:])
        return cls(n, indptr, c, v, _checked=_checked)

    @classmethod
    def from_triplets(cls, n: int, rows, cols, vals, *, mirror: bool = False) -> "SymSparseMatrix":
        """Build from (row, col, value) triples; duplicates are summed.

        With ``mirror=True`` each off-diagonal triple is stored in both
        orientations (intended for inputs carrying one orientation only);
        otherwise the input must already contain both and exact symmetry
        is asserted by transpose comparison.
        """
        rows = np.ascontiguousarray(rows, dtype=np.int64)
        cols = np.ascontiguousarray(cols, dtype=np.int64)
        vals = np.ascontiguousarray(vals, dtype=np.float64)
        if mirror and rows.size:
            off = rows != cols
            rows, cols, vals = (
                np.concatenate([rows, cols[off]]),
                np.concatenate([cols, rows[: off.size][off]]),
                np.concatenate([vals, vals[off]]),
            )
        return cls._from_arrays(n, rows, cols, vals, _checked=False)

    @classmethod
    def from_scipy(cls, m, *, symmetrize: bool = False) -> "SymSparseMatrix":
        """Wrap a scipy sparse matrix; ``symmetrize`` averages with the transpose."""
        m = sp.csr_matrix(m)
        if m.shape[0] != m.shape[1]:
            raise DimensionMismatchError(f"matrix must be square, got {m.shape}")
        if symmetrize:
            m = (m + m.T) * 0.5
        coo = m.tocoo()
        return cls._from_arrays(m.shape[0], coo.row, coo.col, coo.data, _checked=symmetrize)

    @classmethod
    def from_dense(cls, a: np.ndarray, *, symmetrize: bool = False) -> "SymSparseMatrix":
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatchError(f"matrix must be square, got {a.shape}")
        if symmetrize:
            a = (a + a.T) * 0.5
        r, c = np.nonzero(a)
        return cls._from_arrays(a.shape[0], r, c, a[r, c], _checked=symmetrize)

    @classmethod
    def zeros(cls, n: int) -> "SymSparseMatrix":
        return cls(n, np.zeros(n + 1, dtype=np.int64), np.empty(0, dtype=np.int64),
                   np.empty(0), _checked=True)

    def _assert_symmetric(self) -> None:
        t = self.transpose()
        if not (np.array_equal(t.indptr, self.indptr)
                and np.array_equal(t.indices, self.indices)
                and np.array_equal(t.data, self.data)):
            raise AsymmetricMatrixError("stored entries are not symmetric")

    # -- views ----------------------------------------------------------

    @property
    def dim(self) -> int:
        return self.n

    @property
    def nnz(self) -> int:
        return int(self.data.shape[0])

    def transpose(self) -> "SymSparseMatrix":
        rows = np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.indptr))
        return SymSparseMatrix._from_arrays(self.n, self.indices, rows, self.data,
                                            _checked=True)

    def to_scipy(self) -> sp.csr_matrix:
        m = sp.csr_matrix((self.data, self.indices, self.indptr), shape=(self.n, self.n))
        return m

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def triples(self):
        """Canonical (rows, cols, vals) arrays, row-major sorted."""
        rows = np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.indptr))
        return rows, self.indices.copy(), self.data.copy()

    def diagonal(self) -> np.ndarray:
        d = np.zeros(self.n)
        rows, cols, vals = self.triples()
        on = rows == cols
        d[rows[on]] = vals[on]
        return d

    def offdiagonal(self) -> "SymSparseMatrix":
        rows, cols, vals = self.triples()
        off = rows != cols
        return SymSparseMatrix._from_arrays(self.n, rows[off], cols[off], vals[off],
                                            _checked=True)

    def row_sums(self) -> np.ndarray:
        return _block_row_sums(self.indptr, self.data, 0, self.n)

    def max_abs(self) -> float:
        return float(np.abs(self.data).max()) if self.nnz else 0.0

    def is_nonnegative(self) -> bool:
        return bool(self.nnz == 0 or self.data.min() >= 0.0)

    def scale(self, alpha: float) -> "SymSparseMatrix":
        return SymSparseMatrix(self.n, self.indptr, self.indices, self.data * float(alpha),
                               _checked=True)

    def add_diagonal(self, d: np.ndarray) -> "SymSparseMatrix":
        d = _as_float_vector(d, self.n)
        rows, cols, vals = self.triples()
        idx = np.flatnonzero(d != 0.0)
        return SymSparseMatrix._from_arrays(
            self.n,
            np.concatenate([rows, idx]),
            np.concatenate([cols, idx]),
            np.concatenate([vals, d[idx]]),
            _checked=True,
        )

    # -- kernels ----------------------------------------------------------

    def matvec(self, v: np.ndarray, workers: int = 1) -> np.ndarray:
        """Sparse product A @ v, row-parallel, bit-stable across worker counts."""
        v = _as_float_vector(v, self.n)
        prod = self.data * v[self.indices]
        out = np.zeros(self.n)
        if workers <= 1 or self.n < 2 * workers:
            out[:] = _block_row_sums(self.indptr, prod, 0, self.n)
            return out
        bounds = np.linspace(0, self.n, workers + 1).astype(np.int64)

        def run(k: int) -> None:
            lo, hi = int(bounds[k]), int(bounds[k + 1])
            out[lo:hi] = _block_row_sums(self.indptr, prod, lo, hi)

        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, range(workers)))
        return out

    def matmat(self, b: np.ndarray) -> np.ndarray:
        """Dense-block product A @ B (single deterministic code path)."""
        b = np.asarray(b, dtype=np.float64)
        if b.shape[0] != self.n:
            raise DimensionMismatchError(f"expected {self.n} rows, got {b.shape[0]}")
        return self.to_scipy() @ b

    def __repr__(self) -> str:
        return f"SymSparseMatrix(dim={self.n}, nnz={self.nnz})"


def _block_row_sums(indptr: np.ndarray, prod: np.ndarray, lo: int, hi: int) -> np.ndarray:
    """Per-row sums of ``prod`` for rows [lo, hi).

    Each row is reduced over exactly its own entries, so the result does
    not depend on the block decomposition.
    """
    base = int(indptr[lo])
    seg = prod[base:int(indptr[hi])]
    counts = np.diff(indptr[lo:hi + 1])
    out = np.zeros(hi - lo)
    nz = counts > 0
    if seg.size:
        starts = (indptr[lo:hi][nz] - base).astype(np.int64)
        out[nz] = np.add.reduceat(seg, starts)
    return out


def from_triplets(n: int, triples, *, mirror: bool = False) -> SymSparseMatrix:
    """Build a SymSparseMatrix from an iterable of (i, j, w) triples."""
    if hasattr(triples, "__len__") and len(triples) == 0:
        return SymSparseMatrix.zeros(n)
    arr = np.asarray(list(triples), dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError("triples must be (i, j, w) tuples")
    rows = arr[:, 0].astype(np.int64)
    cols = arr[:, 1].astype(np.int64)
    if not (np.all(arr[:, 0] == rows) and np.all(arr[:, 1] == cols)):
        raise ValueError("triple indices must be integers")
    return SymSparseMatrix.from_triplets(n, rows, cols, arr[:, 2], mirror=mirror)


def matvec(m, v: np.ndarray, workers: int = 1) -> np.ndarray:
    """Matrix-vector product for either carrier type."""
    if isinstance(m, DiagMatrix):
        return m.matvec(v)
    if isinstance(m, SymSparseMatrix):
        return m.matvec(v, workers=workers)
    raise TypeError(f"unsupported matrix type {type(m)!r}")


def apply_halfcycle_factor(d: DiagMatrix, a: SymSparseMatrix, v: np.ndarray,
                           side: str, workers: int = 1) -> np.ndarray:
    """Apply one V-cycle factor: (I + D^-1 A) v for ``left``, (I + A D^-1) v for ``right``."""
    if d.dim != a.dim:
        raise DimensionMismatchError(f"D has dim {d.dim}, A has dim {a.dim}")
    v = _as_float_vector(v, d.dim)
    d.require_positive("halfcycle diagonal")
    if side == "left":
        return v + d.inv_matvec(a.matvec(v, workers=workers))
    if side == "right":
        return v + a.matvec(d.inv_matvec(v), workers=workers)
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")


@dataclass(frozen=True)
class SddmSplitting:
    """Splitting M = D - A with D positive diagonal and A nonnegative symmetric.

    The represented matrix is positive definite and row dominant:
    D_ii >= sum_j A_ij (full row sums, diagonal of A included).
    """

    d: DiagMatrix
    a: SymSparseMatrix

    def __post_init__(self):
        if self.d.dim != self.a.dim:
            raise DimensionMismatchError(
                f"D has dim {self.d.dim}, A has dim {self.a.dim}")

    @property
    def dim(self) -> int:
        return self.d.dim

    @property
    def nnz(self) -> int:
        return self.a.nnz

    def row_slack(self) -> np.ndarray:
        """D_ii - sum_j A_ij; nonnegative for a valid splitting."""
        return self.d.values - self.a.row_sums()

    def matvec(self, v: np.ndarray, workers: int = 1) -> np.ndarray:
        return self.d.matvec(v) - self.a.matvec(v, workers=workers)

    def to_dense(self) -> np.ndarray:
        return self.d.to_dense() - self.a.to_dense()

    def to_scipy(self) -> sp.csr_matrix:
        return sp.diags(self.d.values, format="csr") - self.a.to_scipy()

    def validate(self, *, dominance_rtol: float = 1e-9, check_pd: bool = False) -> None:
        """Raise if the splitting invariants fail.

        ``check_pd`` runs a dense Cholesky, so reserve it for desk scale.
        """
        self.d.require_positive("SDDM diagonal")
        if not self.a.is_nonnegative():
            raise ValueError("A must be entrywise nonnegative")
        slack = self.row_slack()
        tol = dominance_rtol * np.maximum(self.d.values, 1.0)
        if self.dim and np.any(slack < -tol):
            bad = int(np.argmin(slack))
            raise ValueError(f"row {bad} violates diagonal dominance by {-slack[bad]:g}")
        if check_pd:
            try:
                np.linalg.cholesky(self.to_dense())
            except np.linalg.LinAlgError as exc:
                raise ValueError("splitting is not positive definite") from exc
