"""Solver for symmetric diagonally dominant linear systems.

The library builds a sparse approximate inverse chain for an SDDM matrix
M = D - A (a sequence of sparse splittings whose telescoped product
approximates the inverse) and solves systems to arbitrary precision with
a V-cycle pass inside preconditioned Richardson iteration.  A FastAPI
service exposes the pipeline over HTTP and the ``invchain`` CLI is a thin
client of that service.
"""

from .core import (
    DiagMatrix,
    SddmSplitting,
    SymSparseMatrix,
    apply_halfcycle_factor,
    from_triplets,
    matvec,
)

__version__ = "0.1.0"

__all__ = [
    "DiagMatrix",
    "SymSparseMatrix",
    "SddmSplitting",
    "from_triplets",
    "matvec",
    "apply_halfcycle_factor",
    "__version__",
]
