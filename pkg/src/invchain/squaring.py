"""Squaring step: D - A D^-1 A, exactly or by per-vertex clique sampling.

The squared matrix decomposes as

    D - A D^-1 A  =  S + L_pairs + sum_u L_u

where S is the diagonal of row-sum slack, L_pairs is the Laplacian of the
exactly-kept edges produced by self-loop entries of A, and each L_u is the
Laplacian of the weighted complete graph on the neighbors of u with edge
weights A_vu * A_uw / D_uu.  The diagonal of A D^-1 A is always computed
exactly in O(m).  Each clique either keeps all its edges (small cliques,
or when the sample budget would exceed the pair count) or is replaced by
a rescaled random sample of its edges.  Sampling uses the closed-form
effective resistance of clique edges, which makes the edge distribution

    p_vw  propto  (A_uv + A_uw) / d_u,     d_u = sum_{v != u} A_uv

so one edge is drawn in O(log delta_u) time from two prefix tables.

The output splitting is assembled so that the row sums of D_hat - A_hat
equal S exactly, and the diagonal of A_hat is the exact diagonal of
A D^-1 A.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .core import DiagMatrix, SddmSplitting, SymSparseMatrix
from .streams import STREAM_CLIQUE, stream

__all__ = [
    "DEFAULT_OVERSAMPLE",
    "SAMPLE_BUDGET_CAP",
    "CliqueSampler",
    "clique_resistance",
    "sample_clique_edge",
    "clique_sample_count",
    "exact_square",
    "sparse_square",
]

DEFAULT_OVERSAMPLE = 4.0      # multiplies delta_u * ln n / eps^2
SAMPLE_BUDGET_CAP = 80_000_000
_DENSE_CUTOFF = 0.15          # density above which squaring goes through BLAS


def clique_sample_count(delta: int, n: int, eps: float, oversample: float) -> float:
    """Target number of with-replacement edge samples for one clique."""
    return oversample * delta * math.log(max(n, 2)) / (eps * eps)


class CliqueSampler:
    """Sampling machinery for the weighted clique on the neighbors of one vertex.

    The clique lives on the neighbors v of ``center`` (entries A_uv > 0,
    v != center) and has edge weights A_uv * A_uw / D_uu.  ``samples`` is
    the with-replacement draw count used to rescale sampled edges.
    """

    __slots__ = ("center", "neighbors", "weights", "d_u", "duu", "delta",
                 "samples", "_cum_first", "_cum_w")

    def __init__(self, center: int, neighbors, weights, duu: float, samples: int):
        self.center = int(center)
        self.neighbors = np.ascontiguousarray(neighbors, dtype=np.int64)
        self.weights = np.ascontiguousarray(weights, dtype=np.float64)
        if self.weights.size and self.weights.min() <= 0.0:
            raise ValueError("clique neighbor weights must be positive")
        if self.neighbors.shape != self.weights.shape:
            raise ValueError("neighbors and weights must align")
        self.duu = float(duu)
        self.d_u = float(self.weights.sum())
        self.delta = int(self.weights.size)
        self.samples = int(samples)
        # stage 1 draws v with mass (delta-2)*a_v + d_u, stage 2 draws w
        # from the conditional; both are O(log delta) prefix lookups
        self._cum_first = np.cumsum((self.delta - 2) * self.weights + self.d_u)
        self._cum_w = np.cumsum(self.weights)

    def _local(self, v: int) -> int:
        i = int(np.searchsorted(self.neighbors, v))
        if i >= self.delta or self.neighbors[i] != v:
            raise KeyError(f"vertex {v} is not a neighbor of {self.center}")
        return i

    def resistance(self, v: int, w: int) -> float:
        """Closed-form effective resistance between neighbors v and w."""
        if v == w:
            raise ValueError("resistance requires two distinct neighbors")
        av = self.weights[self._local(v)]
        aw = self.weights[self._local(w)]
        return (self.duu / self.d_u) * (1.0 / av + 1.0 / aw)

    def pair_probability(self, v: int, w: int) -> float:
        av = self.weights[self._local(v)]
        aw = self.weights[self._local(w)]
        return (av + aw) / (self.d_u * (self.delta - 1))

    def pair_count(self) -> int:
        return self.delta * (self.delta - 1) // 2

    def laplacian_dense(self) -> np.ndarray:
        """Dense clique Laplacian on the local neighbor indexing."""
        a = self.weights
        return (self.d_u * np.diag(a) - np.outer(a, a)) / self.duu

    def all_edges(self):
        """Every clique edge (local lo, hi, weight), used for exact keeps."""
        lo, hi = np.triu_indices(self.delta, k=1)
        w = self.weights[lo] * self.weights[hi] / self.duu
        return lo, hi, w

    def sample_pairs(self, count: int, rng: np.random.Generator):
        """Draw ``count`` unordered pairs (local indices) from the edge law."""
        if self.delta < 2:
            raise ValueError("sampling requires at least two neighbors")
        a, d, delta = self.weights, self.d_u, self.delta
        u1 = rng.random(count) * self._cum_first[-1]
        vi = np.searchsorted(self._cum_first, u1, side="right")
        vi = np.minimum(vi, delta - 1)
        av = a[vi]
        total_v = (delta - 1) * av + (d - av)
        u2 = rng.random(count) * total_v
        uniform_mass = (delta - 1) * av
        take_uniform = u2 < uniform_mass

        wi = np.empty(count, dtype=np.int64)
        if take_uniform.any():
            j = (u2[take_uniform] / av[take_uniform]).astype(np.int64)
            j = np.minimum(j, delta - 2)
            j += j >= vi[take_uniform]
            wi[take_uniform] = j
        rest = ~take_uniform
        if rest.any():
            t = u2[rest] - uniform_mass[rest]
            low = self._cum_w[vi[rest]] - av[rest]
            t = t + np.where(t >= low, av[rest], 0.0)
            k = np.searchsorted(self._cum_w, t, side="right")
            k = np.minimum(k, delta - 1)
            wi[rest] = k
        clash = wi == vi
        if clash.any():  # only reachable through floating-point edge cases
            wi[clash] = np.where(vi[clash] > 0, vi[clash] - 1, 1)
        return np.minimum(vi, wi), np.maximum(vi, wi)

    def sampled_edges(self, rng: np.random.Generator):
        """Deduplicated rescaled sample: (local lo, hi, weight) arrays.

        Duplicate draws are merged by integer count, so a pair drawn c
        times gets weight  w_vw * c / (samples * p_vw)  in one rounding.
        """
        lo, hi = self.sample_pairs(self.samples, rng)
        keys = lo * self.delta + hi
        uniq, counts = np.unique(keys, return_counts=True)
        lo = (uniq // self.delta).astype(np.int64)
        hi = (uniq % self.delta).astype(np.int64)
        alo, ahi = self.weights[lo], self.weights[hi]
        w = (alo * ahi * self.d_u * (self.delta - 1) * counts) / (
            self.duu * self.samples * (alo + ahi))
        return lo, hi, w

    @classmethod
    def from_splitting(cls, s: SddmSplitting, center: int, samples: int = 0) -> "CliqueSampler":
        lo, hi = s.a.indptr[center], s.a.indptr[center + 1]
        cols = s.a.indices[lo:hi]
        vals = s.a.data[lo:hi]
        off = cols != center
        return cls(center, cols[off], vals[off], s.d.values[center], samples)


def clique_resistance(c: CliqueSampler, v: int, w: int) -> float:
    """Effective resistance between two neighbors in the center's clique."""
    return c.resistance(v, w)


def sample_clique_edge(c: CliqueSampler, rng: np.random.Generator):
    """Draw one clique edge; returns (v, w, rescaled_weight) in global ids."""
    if c.delta < 2:
        raise ValueError("clique has fewer than two neighbors")
    lo, hi = c.sample_pairs(1, rng)
    i, j = int(lo[0]), int(hi[0])
    ai, aj = c.weights[i], c.weights[j]
    p = (ai + aj) / (c.d_u * (c.delta - 1))
    w = (ai * aj / c.duu) / (c.samples * p)
    return int(c.neighbors[i]), int(c.neighbors[j]), float(w)


# ---------------------------------------------------------------------------
# exact squaring
# ---------------------------------------------------------------------------

def exact_square(s: SddmSplitting) -> SddmSplitting:
    """Exact squared splitting (D, A D^-1 A); output may be dense.

    D is returned unchanged; the new A carries the full diagonal of
    A D^-1 A.  Intended as the test oracle and as the fast path when no
    clique gets sampled.
    """
    n = s.dim
    inv_d = 1.0 / s.d.values
    density = s.a.nnz / max(n * n, 1)
    if n <= 128 or density > _DENSE_CUTOFF:
        ad = s.a.to_dense()
        b = (ad * inv_d) @ ad
        a2 = SymSparseMatrix.from_dense(b, symmetrize=True)
    else:
        asp = s.a.to_scipy()
        b = (asp.multiply(inv_d)) @ asp
        a2 = SymSparseMatrix.from_scipy(b, symmetrize=True)
    return SddmSplitting(DiagMatrix(s.d.values.copy()), a2)


# ---------------------------------------------------------------------------
# sampled squaring
# ---------------------------------------------------------------------------

def _squared_diagonal(s: SddmSplitting) -> np.ndarray:
    """Exact diagonal of A D^-1 A: sum_k A_vk^2 / D_kk per row."""
    a = s.a
    prod = a.data * a.data / s.d.values[a.indices]
    out = np.zeros(s.dim)
    counts = np.diff(a.indptr)
    nz = counts > 0
    if prod.size:
        out[nz] = np.add.reduceat(prod, a.indptr[:-1][nz])
    return out


def _row_slack_after_square(s: SddmSplitting) -> np.ndarray:
    """S_v = D_v - sum_k A_vk * r_k / D_kk with r the full row sums of A."""
    r = s.a.row_sums()
    slack = s.d.values - s.a.matvec(r / s.d.values)
    tol = 1e-12 * np.maximum(s.d.values, 1.0)
    if np.any(slack < -tol):
        bad = int(np.argmin(slack))
        raise ValueError(f"input splitting violates dominance at row {bad}")
    return np.maximum(slack, 0.0)


def _selfloop_pair_edges(s: SddmSplitting):
    """Exact off-diagonal terms A_vv A_vw / D_vv + A_vw A_ww / D_ww (upper)."""
    a_diag = s.a.diagonal()
    if not a_diag.any():
        e = np.empty(0, dtype=np.int64)
        return e, e, np.empty(0)
    rows, cols, vals = s.a.triples()
    up = rows < cols
    rows, cols, vals = rows[up], cols[up], vals[up]
    coeff = a_diag[rows] / s.d.values[rows] + a_diag[cols] / s.d.values[cols]
    w = vals * coeff
    keep = w > 0.0
    return rows[keep], cols[keep], w[keep]


def _exact_clique_block(s: SddmSplitting, centers: np.ndarray):
    """Summed clique edges of the exactly-kept centers, via one product.

    Computes the off-diagonal part of  A_off[:, C] D_C^-1 A_off[C, :],
    which is exactly  sum_{u in C} L_u's edge weights.
    """
    n = s.dim
    a_off = s.a.offdiagonal()
    if centers.size == 0 or a_off.nnz == 0:
        e = np.empty(0, dtype=np.int64)
        return e, e, np.empty(0)
    inv_d = np.zeros(n)
    inv_d[centers] = 1.0 / s.d.values[centers]
    density = a_off.nnz / max(n * n, 1)
    if n <= 128 or density > _DENSE_CUTOFF:
        ad = a_off.to_dense()
        p = (ad * inv_d) @ ad
        p = 0.5 * (p + p.T)
        rows, cols = np.nonzero(np.triu(p, k=1))
        return rows.astype(np.int64), cols.astype(np.int64), p[rows, cols]
    asp = a_off.to_scipy()
    p = (asp.multiply(inv_d)) @ asp
    p = ((p + p.T) * 0.5).tocoo()
    up = p.row < p.col
    return p.row[up].astype(np.int64), p.col[up].astype(np.int64), p.data[up]


def sparse_square(s: SddmSplitting, eps: float | None, *, seed: int = 0,
                  oversample: float = DEFAULT_OVERSAMPLE, workers: int = 1,
                  sample_cap: int = SAMPLE_BUDGET_CAP,
                  force_assembly: bool = False,
                  stats: dict | None = None) -> SddmSplitting:
    """Sparse approximation of the squared splitting (D, A D^-1 A).

    ``eps=None`` keeps every clique edge (exact mode).  Small cliques
    (delta <= 3) and cliques whose sample budget would not undercut the
    pair count are kept exactly; the rest are replaced by rescaled random
    edge samples, one RNG stream per clique center, merged in center
    order so the result is identical for every worker count.
    """
    if eps is not None and not (0.0 < eps <= 0.5):
        raise ValueError(f"eps must lie in (0, 1/2], got {eps}")
    n = s.dim
    ln_n = math.log(max(n, 2))

    a_off = s.a.offdiagonal()
    deltas = np.diff(a_off.indptr)
    sampled_centers = []
    budget_total = 0
    if eps is not None:
        candidate = np.flatnonzero(deltas > 3)
        for u in candidate:
            target = oversample * deltas[u] * ln_n / (eps * eps)
            pairs = deltas[u] * (deltas[u] - 1) // 2
            if target < pairs:
                su = int(math.ceil(target))
                sampled_centers.append((int(u), su))
                budget_total += su
        if budget_total > sample_cap:
            raise ValueError(
                f"clique sample budget {budget_total} exceeds cap {sample_cap}")

    if stats is not None:
        stats.update(sampled_cliques=len(sampled_centers), samples=budget_total,
                     exact=not sampled_centers)
    if not sampled_centers and not force_assembly:
        return exact_square(s)

    slack = _row_slack_after_square(s)
    b_diag = _squared_diagonal(s)
    t_rows, t_cols, t_vals = _selfloop_pair_edges(s)

    sampled_ids = np.asarray([u for u, _ in sampled_centers], dtype=np.int64)
    exact_ids = np.setdiff1d(np.flatnonzero(deltas >= 2), sampled_ids)
    e_rows, e_cols, e_vals = _exact_clique_block(s, exact_ids)

    per_center = [None] * len(sampled_centers)

    def run_center(idx: int) -> None:
        u, su = sampled_centers[idx]
        sampler = CliqueSampler.from_splitting(s, u, samples=su)
        lo, hi, w = sampler.sampled_edges(stream(seed, STREAM_CLIQUE, u))
        per_center[idx] = (sampler.neighbors[lo], sampler.neighbors[hi], w)

    if workers > 1 and len(sampled_centers) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_center, range(len(sampled_centers))))
    else:
        for i in range(len(sampled_centers)):
            run_center(i)

    parts_r = [t_rows, e_rows] + [p[0] for p in per_center]
    parts_c = [t_cols, e_cols] + [p[1] for p in per_center]
    parts_v = [t_vals, e_vals] + [p[2] for p in per_center]
    rows = np.concatenate(parts_r) if parts_r else np.empty(0, dtype=np.int64)
    cols = np.concatenate(parts_c)
    vals = np.concatenate(parts_v)
    lo = np.minimum(rows, cols)
    hi = np.maximum(rows, cols)

    a_hat = SymSparseMatrix.from_triplets(n, lo, hi, vals, mirror=True)
    a_hat = a_hat.add_diagonal(b_diag)
    d_hat = slack + a_hat.row_sums()
    return SddmSplitting(DiagMatrix(d_hat), a_hat)
