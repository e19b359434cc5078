"""Numerically checked eigenvalue bounds behind chain-depth control.

Each test states a bound used by the construction and verifies it densely
on random instances with 1e-9 slack.
"""

import math

import numpy as np
import pytest
import scipy.linalg as sla

from invchain.core import DiagMatrix, SddmSplitting
from invchain.sparsify import sparsify_splitting
from invchain.squaring import exact_square, sparse_square
from invchain.verify import approx_check

from util import random_sddm

SLACK = 1e-9


def dinv_a_eigs(s: SddmSplitting) -> np.ndarray:
    inv_sqrt = 1.0 / np.sqrt(s.d.values)
    return sla.eigvalsh(inv_sqrt[:, None] * s.a.to_dense() * inv_sqrt)


class TestSpectrumVsCondition:
    def test_eigs_bounded_by_condition_number(self):
        # eigenvalues of D^-1 A lie in [-1 + 1/kappa, 1 - 1/kappa]
        rng = np.random.default_rng(0)
        for _ in range(100):
            s = random_sddm(rng, int(rng.integers(2, 100)), with_diag=True)
            lam_m = sla.eigvalsh(s.to_dense())
            kappa = lam_m[-1] / lam_m[0]
            lam = dinv_a_eigs(s)
            assert lam[0] >= -1.0 + 1.0 / kappa - SLACK
            assert lam[-1] <= 1.0 - 1.0 / kappa + SLACK

    def test_diagonal_brackets_matrix(self):
        # eigenvalues of D^-1 A in [-alpha, beta] force
        # (1+alpha) D >= D - A >= (1-beta) D
        rng = np.random.default_rng(1)
        for _ in range(100):
            s = random_sddm(rng, int(rng.integers(2, 100)), with_diag=True)
            lam = dinv_a_eigs(s)
            alpha, beta = max(-lam[0], 0.0), max(lam[-1], 0.0)
            m = s.to_dense()
            d = s.d.to_dense()
            hi = sla.eigvalsh((1 + alpha) * d - m)
            lo = sla.eigvalsh(m - (1 - beta) * d)
            assert hi[0] >= -SLACK
            assert lo[0] >= -SLACK


class TestSquaredSpectrum:
    def test_squared_eigs_contract(self):
        # squaring maps the top eigenvalue 1 - lam to (1 - lam)^2 and the
        # spectrum into [0, (1-lam)^2]
        rng = np.random.default_rng(2)
        for _ in range(100):
            s = random_sddm(rng, int(rng.integers(2, 100)), with_diag=True)
            top = dinv_a_eigs(s)[-1]
            lam_sq = dinv_a_eigs(exact_square(s))
            assert lam_sq[0] >= -SLACK
            assert lam_sq[-1] <= top * top + SLACK


class TestPerturbedSquaredSpectrum:
    def test_sampled_square_spectrum_window(self):
        # an eps-accurate pair (D_hat, A_hat) for the squared system keeps
        # the spectrum of D_hat^-1 A_hat inside
        # [1 - e^{2 eps}, 1 - (1 - (1-lam)^2) e^{-2 eps}]
        rng = np.random.default_rng(3)
        done = 0
        for trial in range(200):
            if done >= 100:
                break
            n = int(rng.integers(8, 60))
            s = random_sddm(rng, n, with_diag=True)
            target = exact_square(s)
            out = sparse_square(s, 0.5, seed=trial, oversample=0.4,
                                force_assembly=True)
            cert_m = approx_check(target.to_dense(), out.to_dense())
            cert_d = approx_check(s.d.to_dense(), out.d.to_dense())
            eps = max(cert_m.tightest_eps, cert_d.tightest_eps)
            if not math.isfinite(eps) or eps > 0.6:
                continue
            done += 1
            top = dinv_a_eigs(s)[-1]
            lam_hat = dinv_a_eigs(out)
            lo = 1.0 - math.exp(2 * eps)
            hi = 1.0 - (1.0 - top * top) * math.exp(-2 * eps)
            assert lam_hat[0] >= lo - SLACK
            assert lam_hat[-1] <= hi + SLACK
        assert done >= 100


class TestScalingBounds:
    def test_congruence_by_diagonal(self):
        # lam_max(X A X) <= lam_max(A) lam_max(X)^2 and the mirrored
        # bound for the minimum, for positive definite A and diagonal X
        rng = np.random.default_rng(4)
        for _ in range(100):
            n = int(rng.integers(2, 60))
            g = rng.standard_normal((n, n))
            a = g @ g.T + n * np.eye(n)
            x = np.diag(rng.uniform(0.2, 3.0, size=n))
            lam_a = sla.eigvalsh(a)
            lam_x = np.diagonal(x)
            prod = sla.eigvalsh(x @ a @ x)
            assert prod[-1] <= lam_a[-1] * lam_x.max() ** 2 + SLACK
            assert prod[0] >= lam_a[0] * lam_x.min() ** 2 - SLACK

    def test_eigenvalue_transfer_between_paired_splittings(self):
        # if D_til ~eps~ D_hat and (D_til - A_til) ~eps~ (D_hat - A_hat),
        # then 1 - lam_max(D_hat^-1 A_hat) >=
        # (1 - lam_max(D_til^-1 A_til)) e^{-2 eps}, and symmetrically for
        # the smallest eigenvalue
        rng = np.random.default_rng(5)
        for _ in range(100):
            n = int(rng.integers(4, 40))
            s = random_sddm(rng, n, with_diag=True)
            til = exact_square(s)
            hat = sparsify_splitting(til, 0.35, seed=int(rng.integers(1 << 30)),
                                     keep_if_small=False)
            cert_m = approx_check(til.to_dense(), hat.to_dense())
            cert_d = approx_check(til.d.to_dense(), hat.d.to_dense())
            eps = max(cert_m.tightest_eps, cert_d.tightest_eps)
            if not math.isfinite(eps):
                continue
            lam_til = dinv_a_eigs(til)
            lam_hat = dinv_a_eigs(hat)
            assert (1.0 - lam_hat[-1]
                    >= (1.0 - lam_til[-1]) * math.exp(-2 * eps) - SLACK)
            assert (1.0 - lam_hat[0]
                    <= (1.0 - lam_til[0]) * math.exp(2 * eps) + SLACK)
