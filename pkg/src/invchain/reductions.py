"""Conversions between graph Laplacians and SDDM splittings.

A connected Laplacian system L x = b (b orthogonal to the all-ones
vector) is solved by grounding: remove one vertex's row and column, solve
the resulting positive definite SDDM system, re-insert a zero at the
removed vertex, and shift the result back into the mean-zero hyperplane.
Grounding at the heaviest vertex tends to condition the submatrix best,
so that is the default.

Also here: upper bounds on the condition number of grounded systems,
either exact (dense eigensolve, desk scale) or via the closed formula
n^4 * w_max / w_min on the realized entries.  The formula's constant is
heuristic; it exists so chains can be planned without an eigensolve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph

from .chain import ChainPlan, InverseChain, build_chain, plan_chain
from .core import DiagMatrix, SddmSplitting, SymSparseMatrix
from .solver import SolveReport, SolverConfig, precon_richardson

__all__ = [
    "GraphLaplacian",
    "ground",
    "default_ground_index",
    "solve_laplacian",
    "kappa_upper_bound",
    "submatrix_eig_bound_check",
]

_ORTHO_TOL = 1e-10
KAPPA_DENSE_LIMIT = 4096


@dataclass(frozen=True)
class GraphLaplacian:
    """Weighted adjacency carrier; the Laplacian diagonal is implicit."""

    adjacency: SymSparseMatrix
    connected: bool = field(init=False)

    def __post_init__(self):
        if not self.adjacency.is_nonnegative():
            raise ValueError("edge weights must be positive")
        if self.adjacency.diagonal().any():
            raise ValueError("adjacency must have an empty diagonal")
        pattern = sp.csr_matrix(
            (np.ones_like(self.adjacency.data), self.adjacency.indices,
             self.adjacency.indptr), shape=(self.dim, self.dim))
        ncomp, _ = csgraph.connected_components(pattern, directed=False)
        object.__setattr__(self, "connected", bool(ncomp == 1))

    @property
    def dim(self) -> int:
        return self.adjacency.dim

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.row_sums()

    def matvec(self, v: np.ndarray, workers: int = 1) -> np.ndarray:
        return self.degrees * v - self.adjacency.matvec(v, workers=workers)

    def to_dense(self) -> np.ndarray:
        return np.diag(self.degrees) - self.adjacency.to_dense()


def default_ground_index(lap: GraphLaplacian) -> int:
    """Vertex of maximum weighted degree."""
    return int(np.argmax(lap.degrees))


def ground(lap: GraphLaplacian, removed_index: int | None = None) -> SddmSplitting:
    """Principal submatrix of L with one vertex removed, as a splitting.

    The remaining diagonal keeps the full original degrees (including the
    weight of edges into the removed vertex), which is what makes the
    result positive definite for a connected graph.
    """
    if not lap.connected:
        raise ValueError("grounding a disconnected graph leaves a singular system")
    n = lap.dim
    if n < 2:
        raise ValueError("grounding requires at least two vertices")
    g = default_ground_index(lap) if removed_index is None else int(removed_index)
    if not (0 <= g < n):
        raise IndexError(f"ground index {g} out of range for {n} vertices")
    keep = np.concatenate([np.arange(g), np.arange(g + 1, n)])
    rows, cols, vals = lap.adjacency.triples()
    inside = (rows != g) & (cols != g)
    remap = np.empty(n, dtype=np.int64)
    remap[keep] = np.arange(n - 1)
    sub = SymSparseMatrix.from_triplets(
        n - 1, remap[rows[inside]], remap[cols[inside]], vals[inside])
    return SddmSplitting(DiagMatrix(lap.degrees[keep]), sub)


def _require_orthogonal_to_ones(b: np.ndarray) -> None:
    drift = abs(float(b.sum()))
    if drift > _ORTHO_TOL * max(float(np.abs(b).sum()), 1e-300):
        raise ValueError(
            f"right-hand side is not orthogonal to the all-ones vector "
            f"(sum {drift:g}); project it explicitly if that is intended")


def solve_laplacian(lap: GraphLaplacian, b: np.ndarray, eps: float, *,
                    seed: int = 0, workers: int = 1,
                    removed_index: int | None = None,
                    plan: ChainPlan | None = None,
                    chain: InverseChain | None = None,
                    kappa_mode: str = "auto",
                    config: SolverConfig | None = None,
                    ) -> tuple[np.ndarray, SolveReport]:
    """Solve L x = b with ||x - x*||_L <= eps ||x*||_L and x orthogonal to ones.

    Builds (or reuses) a chain for the grounded system; the grounded
    solution is re-embedded with a zero at the removed vertex and shifted
    to mean zero.  The M-norm guarantee on the grounded system transfers
    to the L-norm exactly because the removed coordinate is pinned.
    """
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (lap.dim,):
        raise ValueError(f"rhs has shape {b.shape}, expected ({lap.dim},)")
    if not lap.connected:
        raise ValueError("solve requires a connected graph")
    _require_orthogonal_to_ones(b)

    g = default_ground_index(lap) if removed_index is None else int(removed_index)
    grounded = ground(lap, g)
    if not np.any(b):
        return np.zeros(lap.dim), SolveReport(converged=True)
    if chain is None:
        if plan is None:
            mode = kappa_mode
            if mode == "auto":
                mode = "dense" if lap.dim <= KAPPA_DENSE_LIMIT else "formula"
            plan = plan_chain(kappa_upper_bound(grounded, mode))
        chain = build_chain(grounded, plan, seed=seed, workers=workers)
    keep = np.concatenate([np.arange(g), np.arange(g + 1, lap.dim)])
    x_sub, report = precon_richardson(grounded, chain, b[keep], eps,
                                      config=config, workers=workers)
    x = np.zeros(lap.dim)
    x[keep] = x_sub
    x -= x.mean()
    return x, report


def kappa_upper_bound(s: SddmSplitting, mode: str = "dense", *,
                      dense_limit: int = KAPPA_DENSE_LIMIT) -> float:
    """Upper bound on the condition number of D - A.

    ``dense`` returns the exact extreme-eigenvalue ratio (refused above
    ``dense_limit``).  ``formula`` returns (n+1)^4 * w_max / w_min over
    the realized nonzero magnitudes, treating the input as a grounded
    submatrix of an (n+1)-vertex Laplacian; it is a heuristic bound with
    constant one and is not tight.
    """
    if mode == "formula":
        m = s.to_scipy().tocoo()
        mags = np.abs(m.data[m.data != 0.0])
        if mags.size == 0:
            return 1.0
        ratio = float(mags.max() / mags.min())
        return float((s.dim + 1) ** 4) * ratio
    if mode != "dense":
        raise ValueError(f"mode must be 'dense' or 'formula', got {mode!r}")
    if s.dim > dense_limit:
        raise ValueError(f"dense mode refused for n={s.dim} > {dense_limit}")
    lam = sla.eigvalsh(s.to_dense())
    if lam[0] <= 0.0:
        raise ValueError("splitting is not positive definite")
    return float(max(lam[-1] / lam[0], 1.0))


def submatrix_eig_bound_check(lap: GraphLaplacian,
                              removed_index: int | None = None,
                              slack: float = 1e-9):
    """Dense check that grounding loses at most a factor n in the bottom eigenvalue.

    Returns (lam_1 of the grounded matrix, lam_2(L)/n, bound holds).
    """
    if not lap.connected:
        raise ValueError("check requires a connected graph")
    g = default_ground_index(lap) if removed_index is None else int(removed_index)
    grounded = ground(lap, g)
    lam_m = float(sla.eigvalsh(grounded.to_dense())[0])
    lam_l2 = float(sla.eigvalsh(lap.to_dense())[1])
    floor = lam_l2 / lap.dim
    return lam_m, floor, bool(lam_m >= floor - slack)
