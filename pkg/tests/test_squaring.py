import math

import numpy as np
import pytest
import scipy.linalg as sla

from invchain.core import DiagMatrix, SddmSplitting, SymSparseMatrix, from_triplets
from invchain.squaring import (
    CliqueSampler,
    clique_resistance,
    clique_sample_count,
    exact_square,
    sample_clique_edge,
    sparse_square,
)
from invchain.streams import stream
from invchain.verify import approx_check

from util import random_sddm

SWAP = from_triplets(2, [(0, 1, 1.0), (1, 0, 1.0)])


def elementary_laplacian(n, i, j, w):
    lap = np.zeros((n, n))
    lap[i, i] = lap[j, j] = w
    lap[i, j] = lap[j, i] = -w
    return lap


class TestExactSquare:
    def test_two_by_two_swap(self):
        s = SddmSplitting(DiagMatrix([2.0, 2.0]), SWAP)
        sq = exact_square(s)
        assert sq.d.values.tolist() == [2.0, 2.0]
        assert sq.a.to_dense().tolist() == [[0.5, 0.0], [0.0, 0.5]]
        assert sq.to_dense().tolist() == [[1.5, 0.0], [0.0, 1.5]]

    def test_zero_a_unchanged(self):
        s = SddmSplitting(DiagMatrix([3.0, 4.0]), SymSparseMatrix.zeros(2))
        sq = exact_square(s)
        assert sq.d.values.tolist() == [3.0, 4.0]
        assert sq.a.nnz == 0

    def test_grounded_three_path(self):
        s = SddmSplitting(DiagMatrix([2.0, 1.0]), SWAP)
        sq = exact_square(s)
        assert sq.a.to_dense().tolist() == [[1.0, 0.0], [0.0, 0.5]]

    def test_matches_dense_formula(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            s = random_sddm(rng, int(rng.integers(2, 30)), with_diag=True)
            expected = s.a.to_dense() @ np.diag(1.0 / s.d.values) @ s.a.to_dense()
            got = exact_square(s).a.to_dense()
            assert np.allclose(got, expected, rtol=1e-13, atol=1e-13)

    def test_sddm_closure(self):
        # squared splittings keep every SDDM invariant, including full
        # row dominance
        rng = np.random.default_rng(1)
        for _ in range(25):
            s = random_sddm(rng, int(rng.integers(2, 60)), with_diag=True)
            sq = exact_square(s)
            sq.validate(check_pd=True)
            assert np.all(sq.row_slack() >= -1e-12)

    def test_eigenvalue_contraction(self):
        # eigenvalues of D^-1 (A D^-1 A) stay inside [0, (1-lam)^2]
        rng = np.random.default_rng(2)
        for _ in range(25):
            s = random_sddm(rng, int(rng.integers(2, 50)), with_diag=True)
            dinv = 1.0 / s.d.values
            lam_a = sla.eigvalsh(np.sqrt(dinv)[:, None] * s.a.to_dense() * np.sqrt(dinv))
            top = lam_a[-1]
            sq = exact_square(s)
            lam_sq = sla.eigvalsh(np.sqrt(dinv)[:, None] * sq.a.to_dense() * np.sqrt(dinv))
            assert lam_sq[0] >= -1e-9
            assert lam_sq[-1] <= top * top + 1e-9


def make_sampler(weights, duu, samples=100):
    weights = np.asarray(weights, dtype=np.float64)
    neighbors = np.arange(1, weights.size + 1, dtype=np.int64)
    return CliqueSampler(0, neighbors, weights, duu, samples)


class TestCliqueResistance:
    def test_unit_pair(self):
        c = make_sampler([1.0, 1.0], duu=2.0)
        assert clique_resistance(c, 1, 2) == pytest.approx(2.0)

    def test_weighted_pair(self):
        c = make_sampler([2.0, 1.0], duu=3.0)
        assert clique_resistance(c, 1, 2) == pytest.approx(1.5)

    def test_unit_triangle(self):
        c = make_sampler([1.0, 1.0, 1.0], duu=3.0)
        for v, w in ((1, 2), (1, 3), (2, 3)):
            assert clique_resistance(c, v, w) == pytest.approx(2.0)

    def test_non_neighbor_rejected(self):
        c = make_sampler([1.0, 1.0], duu=2.0)
        with pytest.raises(KeyError):
            clique_resistance(c, 1, 9)

    def test_formula_matches_pseudoinverse(self):
        # closed form against the dense pseudoinverse of the explicitly
        # built clique Laplacian
        rng = np.random.default_rng(3)
        for _ in range(120):
            delta = int(rng.integers(2, 13))
            weights = rng.uniform(0.1, 3.0, size=delta)
            duu = weights.sum() * rng.uniform(1.0, 2.0)
            c = make_sampler(weights, duu)
            lap = c.laplacian_dense()
            pinv = np.linalg.pinv(lap)
            i, j = rng.choice(delta, size=2, replace=False)
            e = np.zeros(delta)
            e[i], e[j] = 1.0, -1.0
            oracle = float(e @ pinv @ e)
            formula = c.resistance(int(c.neighbors[i]), int(c.neighbors[j]))
            assert formula == pytest.approx(oracle, rel=1e-10)


class TestSampleCliqueEdge:
    def test_pair_distribution_example(self):
        # neighbors with weights (1, 1, 2): pair masses (v,w)=1/4,
        # (v,x)=3/8, (w,x)=3/8
        c = make_sampler([1.0, 1.0, 2.0], duu=4.0)
        assert c.pair_probability(1, 2) == pytest.approx(0.25)
        assert c.pair_probability(1, 3) == pytest.approx(0.375)
        assert c.pair_probability(2, 3) == pytest.approx(0.375)
        lo, hi = c.sample_pairs(40000, stream(0, 9))
        keys = lo * 3 + hi
        freq = {k: (keys == k).mean() for k in np.unique(keys)}
        assert freq[0 * 3 + 1] == pytest.approx(0.25, abs=0.01)
        assert freq[0 * 3 + 2] == pytest.approx(0.375, abs=0.01)
        assert freq[1 * 3 + 2] == pytest.approx(0.375, abs=0.01)

    def test_mass_invariant(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            delta = int(rng.integers(2, 10))
            c = make_sampler(rng.uniform(0.2, 5.0, size=delta), duu=10.0)
            total = sum(
                (c.weights[i] + c.weights[j]) / c.d_u
                for i in range(delta) for j in range(i + 1, delta))
            assert total == pytest.approx(delta - 1, rel=1e-12)

    def test_two_neighbors_always_unique_pair(self):
        c = make_sampler([3.0, 0.5], duu=4.0, samples=7)
        rng = stream(1, 2)
        for _ in range(10):
            v, w, weight = sample_clique_edge(c, rng)
            assert (v, w) == (1, 2)
            expected = (3.0 * 0.5 / 4.0) / 7.0  # p = 1 for the only pair
            assert weight == pytest.approx(expected)

    def test_unbiased_expectation(self):
        # expectation of one rescaled sampled edge Laplacian, enumerated
        # over the exact pair law, equals L_u / samples entrywise
        rng = np.random.default_rng(5)
        for _ in range(10):
            delta = int(rng.integers(2, 8))
            weights = rng.uniform(0.2, 4.0, size=delta)
            duu = weights.sum() * rng.uniform(1.0, 1.5)
            samples = int(rng.integers(1, 50))
            c = make_sampler(weights, duu, samples=samples)
            expected = np.zeros((delta, delta))
            for i in range(delta):
                for j in range(i + 1, delta):
                    p = c.pair_probability(int(c.neighbors[i]), int(c.neighbors[j]))
                    w_edge = weights[i] * weights[j] / duu
                    expected += p * (w_edge / (samples * p)) * elementary_laplacian(delta, i, j, 1.0)
            assert np.allclose(expected, c.laplacian_dense() / samples,
                               rtol=1e-12, atol=1e-14)

    def test_too_few_neighbors_rejected(self):
        c = make_sampler([2.0], duu=2.0)
        with pytest.raises(ValueError):
            sample_clique_edge(c, stream(0, 0))


class TestSparseSquare:
    def test_exact_mode_bitwise_on_three_path(self):
        s = SddmSplitting(DiagMatrix([2.0, 1.0]), SWAP)
        a = sparse_square(s, None)
        b = exact_square(s)
        assert np.array_equal(a.d.values, b.d.values)
        assert np.array_equal(a.a.data, b.a.data)
        assert np.array_equal(a.a.indices, b.a.indices)

    def test_zero_a_passthrough(self):
        s = SddmSplitting(DiagMatrix([1.0, 2.0]), SymSparseMatrix.zeros(2))
        out = sparse_square(s, 0.5, seed=1)
        assert out.a.nnz == 0
        assert out.d.values.tolist() == [1.0, 2.0]

    def test_eps_domain(self):
        s = SddmSplitting(DiagMatrix([2.0, 2.0]), SWAP)
        with pytest.raises(ValueError):
            sparse_square(s, 0.0)
        with pytest.raises(ValueError):
            sparse_square(s, 0.7)

    def test_assembly_matches_exact_when_all_kept(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            s = random_sddm(rng, int(rng.integers(3, 25)), with_diag=True)
            via_assembly = sparse_square(s, None, force_assembly=True)
            direct = exact_square(s)
            assert np.allclose(via_assembly.to_dense(), direct.to_dense(),
                               rtol=1e-12, atol=1e-13)
            assert np.allclose(via_assembly.d.values, direct.d.values, rtol=1e-12)

    def test_row_sum_identity_on_sampled_output(self):
        # the output diagonal is exactly slack + row sums of A_hat, so the
        # row sums of D_hat - A_hat reproduce the exact slack of the square
        star = star_splitting(40)
        out = sparse_square(star, 0.5, seed=3, oversample=0.5)
        assert out.a.nnz < exact_square(star).a.nnz  # sampling engaged
        r = star.a.row_sums()
        slack = np.maximum(star.d.values - star.a.matvec(r / star.d.values), 0.0)
        assert np.array_equal(out.d.values, slack + out.a.row_sums())
        realized = out.d.values - out.a.matvec(np.ones(star.dim))
        assert np.allclose(realized, slack, rtol=1e-12, atol=1e-12)
        assert np.all(realized >= -1e-12)

    def test_sampled_square_approximates(self):
        star = star_splitting(60)
        target = exact_square(star)
        hits = 0
        for seed in range(20):
            out = sparse_square(star, 0.5, seed=seed, oversample=1.0)
            if approx_check(target.to_dense(), out.to_dense(), 0.5).passed:
                hits += 1
        assert hits >= 17

    def test_worker_count_invariance(self):
        star = star_splitting(50)
        base = sparse_square(star, 0.5, seed=11, oversample=0.5, workers=1)
        for workers in (2, 5):
            other = sparse_square(star, 0.5, seed=11, oversample=0.5, workers=workers)
            assert np.array_equal(base.a.data, other.a.data)
            assert np.array_equal(base.a.indices, other.a.indices)
            assert np.array_equal(base.d.values, other.d.values)

    def test_sample_budget_cap(self):
        star = star_splitting(80)
        with pytest.raises(ValueError):
            sparse_square(star, 0.5, oversample=0.5, sample_cap=10)


def star_splitting(n):
    """Grounded star: center with n-1 unit leaves, plus slack for dominance."""
    rows = np.zeros(n - 1, dtype=np.int64)
    cols = np.arange(1, n, dtype=np.int64)
    a = SymSparseMatrix.from_triplets(n, rows, cols, np.ones(n - 1), mirror=True)
    d = a.row_sums() + 0.5
    return SddmSplitting(DiagMatrix(d), a)
