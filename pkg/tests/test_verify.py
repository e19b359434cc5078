import math

import numpy as np
import pytest

from invchain.verify import approx_check, fact1_suite

X2 = np.array([[2.0, -1.0], [-1.0, 2.0]])


class TestApproxCheck:
    def test_identical_matrices(self):
        cert = approx_check(X2, X2, 0.0)
        assert cert.tightest_eps == pytest.approx(0.0, abs=1e-12)
        assert cert.passed

    def test_pure_scaling(self):
        cert = approx_check(X2, math.exp(0.1) * X2)
        assert cert.tightest_eps == pytest.approx(0.1, abs=1e-12)

    def test_two_by_two_against_diagonal(self):
        # generalized eigenvalues of (diag(2,2), X2) are {2/3, 2}, so the
        # definition gives tightest eps = ln 2
        cert = approx_check(X2, np.diag([2.0, 2.0]))
        assert cert.lam_min == pytest.approx(2.0 / 3.0, rel=1e-12)
        assert cert.lam_max == pytest.approx(2.0, rel=1e-12)
        assert cert.tightest_eps == pytest.approx(math.log(2.0), rel=1e-12)

    def test_symmetric_in_arguments(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            a = rng.standard_normal((8, 8))
            x = a @ a.T + 8 * np.eye(8)
            b = rng.standard_normal((8, 8))
            y = b @ b.T + 8 * np.eye(8)
            e1 = approx_check(x, y).tightest_eps
            e2 = approx_check(y, x).tightest_eps
            assert e1 == pytest.approx(e2, abs=1e-10)

    def test_monotone_under_psd_addition(self):
        rng = np.random.default_rng(6)
        for _ in range(15):
            a = rng.standard_normal((7, 7))
            x = a @ a.T + 7 * np.eye(7)
            b = rng.standard_normal((7, 7))
            y = b @ b.T + 7 * np.eye(7)
            c = rng.standard_normal((7, 7))
            psd = c @ c.T
            before = approx_check(x, y).tightest_eps
            after = approx_check(x + psd, y + psd).tightest_eps
            assert after <= before + 1e-9

    def test_singular_y_never_certifies(self):
        y = np.array([[1.0, 0.0], [0.0, 0.0]])
        cert = approx_check(X2, y, 10.0)
        assert not cert.passed

    def test_shared_nullspace_restriction(self):
        lap = np.array([[1.0, -1.0], [-1.0, 1.0]])
        cert = approx_check(lap, 1.5 * lap)
        assert cert.tightest_eps == pytest.approx(math.log(1.5), abs=1e-10)

    def test_nullspace_mismatch_fails(self):
        lap = np.array([[1.0, -1.0], [-1.0, 1.0]])
        cert = approx_check(lap, np.eye(2), 5.0)
        assert not cert.passed

    def test_requested_eps_gate(self):
        assert approx_check(X2, math.exp(0.2) * X2, 0.25).passed
        assert not approx_check(X2, math.exp(0.2) * X2, 0.15).passed

    def test_dense_limit_refused(self):
        with pytest.raises(ValueError):
            approx_check(np.eye(10), np.eye(10), dense_limit=5)


class TestFact1Suite:
    def test_scaling_commutes_with_inversion(self):
        x = X2
        y = math.exp(0.2) * x
        cert = approx_check(np.linalg.inv(x), np.linalg.inv(y), 0.2)
        assert cert.passed
        assert cert.tightest_eps == pytest.approx(0.2, abs=1e-10)

    def test_chained_perturbations(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((6, 6))
        x = a @ a.T + 6 * np.eye(6)
        y = math.exp(0.1) * x
        z = math.exp(0.15) * y
        assert approx_check(x, z, 0.25).passed

    def test_congruence_preserves_eps(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((8, 8))
        x = a @ a.T + 8 * np.eye(8)
        y = math.exp(0.1) * x
        v = rng.standard_normal((8, 4))
        cert = approx_check(v.T @ x @ v, v.T @ y @ v, 0.1)
        assert cert.passed

    def test_full_suite_passes(self):
        report = fact1_suite(trials=20, dim=10, seed=0)
        assert report.all_pass, report.violations
