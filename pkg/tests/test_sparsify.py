import numpy as np
import pytest

from invchain.core import DiagMatrix, SddmSplitting, SymSparseMatrix, from_triplets
from invchain.sparsify import (
    ResistanceOracle,
    effective_resistance,
    general_sample_count,
    sparsify_splitting,
)
from invchain.verify import approx_check

from util import random_connected_adjacency


def laplacian_of(adj: SymSparseMatrix) -> SymSparseMatrix:
    return adj.scale(-1.0).add_diagonal(adj.row_sums())


class TestEffectiveResistance:
    def test_single_edge(self):
        adj = from_triplets(2, [(0, 1, 4.0)], mirror=True)
        r = effective_resistance(ResistanceOracle(), adj, 0, 1)
        assert r == pytest.approx(0.25, rel=1e-12)

    def test_series_path(self):
        adj = from_triplets(3, [(0, 1, 1.0), (1, 2, 1.0)], mirror=True)
        r = effective_resistance(ResistanceOracle(), adj, 0, 2)
        assert r == pytest.approx(2.0, rel=1e-12)

    def test_unit_triangle(self):
        adj = from_triplets(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)], mirror=True)
        oracle = ResistanceOracle()
        for v, w in ((0, 1), (0, 2), (1, 2)):
            assert effective_resistance(oracle, adj, v, w) == pytest.approx(2 / 3, rel=1e-12)

    def test_accepts_realized_laplacian(self):
        adj = from_triplets(2, [(0, 1, 2.0)], mirror=True)
        lap = laplacian_of(adj)
        assert effective_resistance(ResistanceOracle(), lap, 0, 1) == pytest.approx(0.5)

    def test_cross_component_rejected(self):
        adj = from_triplets(4, [(0, 1, 1.0), (2, 3, 1.0)], mirror=True)
        with pytest.raises(ValueError, match="components"):
            effective_resistance(ResistanceOracle(), adj, 0, 2)

    def test_oracle_size_limit(self):
        adj = from_triplets(3, [(0, 1, 1.0), (1, 2, 1.0)], mirror=True)
        with pytest.raises(ValueError, match="refused"):
            effective_resistance(ResistanceOracle(limit=2), adj, 0, 2)

    def test_symmetry_and_triangle_inequality(self):
        rng = np.random.default_rng(0)
        oracle = ResistanceOracle()
        for _ in range(10):
            adj = random_connected_adjacency(rng, int(rng.integers(4, 20)))
            u, v, w = rng.choice(adj.dim, size=3, replace=False)
            ruv = effective_resistance(oracle, adj, int(u), int(v))
            rvu = effective_resistance(oracle, adj, int(v), int(u))
            assert ruv == pytest.approx(rvu, rel=1e-10)
            rvw = effective_resistance(oracle, adj, int(v), int(w))
            ruw = effective_resistance(oracle, adj, int(u), int(w))
            assert ruw <= ruv + rvw + 1e-9

    def test_sum_law(self):
        # sum of w_e * R_e over edges equals n - (number of components)
        rng = np.random.default_rng(1)
        oracle = ResistanceOracle()
        for _ in range(10):
            n = int(rng.integers(4, 80))
            adj = random_connected_adjacency(rng, n)
            rows, cols, vals = adj.triples()
            up = rows < cols
            from invchain.sparsify import _realized_laplacian
            lap = _realized_laplacian(adj)
            rs = oracle.resistances(lap, rows[up], cols[up])
            assert float(vals[up] @ rs) == pytest.approx(n - 1, abs=1e-9)


def k4_with_excess() -> SddmSplitting:
    pairs = [(i, j, 1.0) for i in range(4) for j in range(i + 1, 4)]
    adj = from_triplets(4, pairs, mirror=True)
    return SddmSplitting(DiagMatrix(adj.row_sums() + 1.0), adj)


class TestSparsifySplitting:
    def test_eps_domain(self):
        with pytest.raises(ValueError):
            sparsify_splitting(k4_with_excess(), 0.0)

    def test_keep_if_small_is_identity(self):
        s = k4_with_excess()
        out = sparsify_splitting(s, 0.5, seed=0)
        assert out is s

    def test_single_edge_exact_reconstruction(self):
        w = 0.7300000000000031
        adj = from_triplets(2, [(0, 1, w)], mirror=True)
        s = SddmSplitting(DiagMatrix(adj.row_sums()), adj)
        out = sparsify_splitting(s, 0.5, seed=5, keep_if_small=False)
        assert np.array_equal(out.a.data, s.a.data)
        assert np.array_equal(out.d.values, s.d.values)

    def test_k4_concentration(self):
        s = k4_with_excess()
        dense = s.to_dense()
        hits = 0
        for seed in range(100):
            out = sparsify_splitting(s, 0.5, seed=seed, keep_if_small=False)
            if approx_check(dense, out.to_dense(), 0.5).passed:
                hits += 1
        assert hits >= 90

    def test_diagonal_bookkeeping_carried_exactly(self):
        # excess X and A-diagonal Y reappear exactly in the output slack
        rng = np.random.default_rng(2)
        adj = random_connected_adjacency(rng, 30)
        y = rng.uniform(0.0, 0.5, size=30)
        a = adj.add_diagonal(y)
        x = rng.uniform(0.1, 2.0, size=30)
        s = SddmSplitting(DiagMatrix(a.row_sums() + x), a)
        out = sparsify_splitting(s, 0.5, seed=3, keep_if_small=False)
        assert np.allclose(out.a.diagonal(), y, rtol=0, atol=0)
        slack = out.d.values - out.a.row_sums()
        assert np.allclose(slack, s.row_slack(), rtol=1e-12, atol=1e-12)
        out.validate()

    def test_sampled_laplacian_part_has_zero_row_sums(self):
        rng = np.random.default_rng(4)
        adj = random_connected_adjacency(rng, 40)
        s = SddmSplitting(DiagMatrix(adj.row_sums() + 0.3), adj)
        out = sparsify_splitting(s, 0.5, seed=9, keep_if_small=False)
        lap_rowsums = (out.d.values - 0.3) - out.a.row_sums()
        assert np.allclose(lap_rowsums, 0.0, atol=1e-12)

    def test_output_budget(self):
        rng = np.random.default_rng(5)
        adj = random_connected_adjacency(rng, 50, extra_edge_prob=0.8)
        s = SddmSplitting(DiagMatrix(adj.row_sums() + 0.1), adj)
        q = general_sample_count(50, 0.5, 4.0)
        out = sparsify_splitting(s, 0.5, seed=1, keep_if_small=False)
        assert out.a.nnz <= 2 * q + 50

    def test_determinism(self):
        rng = np.random.default_rng(6)
        adj = random_connected_adjacency(rng, 25)
        s = SddmSplitting(DiagMatrix(adj.row_sums() + 0.2), adj)
        a = sparsify_splitting(s, 0.4, seed=7, keep_if_small=False)
        b = sparsify_splitting(s, 0.4, seed=7, keep_if_small=False)
        assert np.array_equal(a.a.data, b.a.data)
        assert np.array_equal(a.d.values, b.d.values)
