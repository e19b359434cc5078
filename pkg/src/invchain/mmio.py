"""File formats: Matrix Market matrices, plain-text vectors, edge lists.

Symmetric matrices are written in Matrix Market coordinate format
(``symmetric`` kind, 1-indexed, lower triangle stored).  Values use 17
significant digits so that write/read round-trips are bit exact and the
emitted text is deterministic for a given matrix.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .core import DiagMatrix, SymSparseMatrix

__all__ = [
    "write_matrix",
    "read_matrix",
    "matrix_to_text",
    "matrix_from_text",
    "write_vector",
    "read_vector",
    "vector_to_text",
    "vector_from_text",
    "read_edge_list",
    "write_edge_list",
]

_HEADER = "%%MatrixMarket matrix coordinate real symmetric"


def matrix_to_text(m: SymSparseMatrix | DiagMatrix) -> str:
    """Serialize to Matrix Market coordinate/symmetric text."""
    if isinstance(m, DiagMatrix):
        idx = np.flatnonzero(m.values)
        rows, cols, vals = idx, idx, m.values[idx]
        n = m.dim
    else:
        rows, cols, vals = m.triples()
        keep = rows >= cols  # lower triangle carries the symmetric kind
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
        n = m.dim
    lines = [_HEADER, f"{n} {n} {len(vals)}"]
    lines.extend(f"{i + 1} {j + 1} {v:.17g}" for i, j, v in zip(rows, cols, vals))
    return "\n".join(lines) + "\n"


def matrix_from_text(text: str) -> SymSparseMatrix:
    """Parse Matrix Market coordinate text into a SymSparseMatrix."""
    lines = text.splitlines()
    if not lines:
        raise ValueError("empty matrix market text")
    head = lines[0].strip().lower().split()
    if len(head) < 4 or head[0] != "%%matrixmarket" or head[1] != "matrix":
        raise ValueError("not a Matrix Market file")
    if head[2] != "coordinate":
        raise ValueError("only coordinate format is supported")
    symmetric = len(head) > 4 and head[4] == "symmetric"
    if head[3] not in ("real", "integer"):
        raise ValueError(f"unsupported field {head[3]!r}")
    if not symmetric and head[4] != "general":
        raise ValueError(f"unsupported symmetry {head[4]!r}")

    body = [ln for ln in lines[1:] if ln.strip() and not ln.lstrip().startswith("%")]
    if not body:
        raise ValueError("missing size line")
    nrow, ncol, nnz = (int(t) for t in body[0].split()[:3])
    if nrow != ncol:
        raise ValueError(f"matrix must be square, got {nrow}x{ncol}")
    entries = body[1:]
    if len(entries) != nnz:
        raise ValueError(f"expected {nnz} entries, found {len(entries)}")
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz)
    for k, ln in enumerate(entries):
        parts = ln.split()
        rows[k] = int(parts[0]) - 1
        cols[k] = int(parts[1]) - 1
        vals[k] = float(parts[2]) if len(parts) > 2 else 1.0
    if symmetric:
        return SymSparseMatrix.from_triplets(nrow, rows, cols, vals, mirror=True)
    return SymSparseMatrix.from_triplets(nrow, rows, cols, vals)


def write_matrix(path: str | Path, m: SymSparseMatrix | DiagMatrix) -> None:
    Path(path).write_text(matrix_to_text(m))


def read_matrix(path: str | Path) -> SymSparseMatrix:
    return matrix_from_text(Path(path).read_text())


def vector_to_text(v: np.ndarray) -> str:
    v = np.asarray(v, dtype=np.float64)
    return "".join(f"{x:.17g}\n" for x in v)


def vector_from_text(text: str) -> np.ndarray:
    vals = [float(t) for t in text.split()]
    return np.asarray(vals, dtype=np.float64)


def write_vector(path: str | Path, v: np.ndarray) -> None:
    Path(path).write_text(vector_to_text(v))


def read_vector(path: str | Path) -> np.ndarray:
    return vector_from_text(Path(path).read_text())


def read_edge_list(path_or_text: str | Path, *, is_text: bool = False) -> SymSparseMatrix:
    """Parse ``u v w`` lines (0-indexed vertices) into a weighted adjacency."""
    text = str(path_or_text) if is_text else Path(path_or_text).read_text()
    us, vs, ws = [], [], []
    for ln in text.splitlines():
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        parts = ln.split()
        us.append(int(parts[0]))
        vs.append(int(parts[1]))
        ws.append(float(parts[2]) if len(parts) > 2 else 1.0)
    if not us:
        raise ValueError("edge list is empty")
    n = max(max(us), max(vs)) + 1
    return SymSparseMatrix.from_triplets(n, np.asarray(us), np.asarray(vs),
                                         np.asarray(ws), mirror=True)


def write_edge_list(path: str | Path, adjacency: SymSparseMatrix) -> None:
    rows, cols, vals = adjacency.triples()
    keep = rows < cols
    lines = [f"{i} {j} {w:.17g}" for i, j, w in zip(rows[keep], cols[keep], vals[keep])]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))
