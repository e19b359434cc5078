"""Dense spectral oracles for two-sided approximation certificates.

The central relation: X approximates Y within quality eps when

    exp(eps) * X >= Y >= exp(-eps) * X      (in the semidefinite order)

equivalently, all generalized eigenvalues of (Y, X) lie in
[exp(-eps), exp(eps)].  ``approx_check`` certifies this densely and
reports the tightest eps the pair satisfies.  These oracles are meant for
desk-scale validation and tests, not for large instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .core import DiagMatrix, SddmSplitting, SymSparseMatrix

__all__ = ["DENSE_LIMIT", "EIG_SLACK", "SpectralCert", "approx_check", "fact1_suite"]

DENSE_LIMIT = 4096
EIG_SLACK = 1e-9  # absolute slack on the log scale


def _to_dense(m) -> np.ndarray:
    if isinstance(m, np.ndarray):
        a = np.asarray(m, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        return a
    if isinstance(m, (SymSparseMatrix, DiagMatrix, SddmSplitting)):
        return m.to_dense()
    raise TypeError(f"unsupported matrix type {type(m)!r}")


@dataclass(frozen=True)
class SpectralCert:
    """Extreme generalized eigenvalues of (Y, X) and the implied tightest eps."""

    lam_min: float
    lam_max: float
    tightest_eps: float
    requested_eps: float | None = None
    slack: float = EIG_SLACK

    @property
    def passed(self) -> bool:
        if self.requested_eps is None:
            return math.isfinite(self.tightest_eps)
        return self.tightest_eps <= self.requested_eps + self.slack

    def __str__(self) -> str:
        req = "-" if self.requested_eps is None else f"{self.requested_eps:.6g}"
        return (f"lam=[{self.lam_min:.9g}, {self.lam_max:.9g}] "
                f"tightest_eps={self.tightest_eps:.9g} requested={req} "
                f"pass={self.passed}")


def _restrict_to_range(x: np.ndarray, y: np.ndarray, null_tol: float):
    """Project both matrices onto the complement of X's nullspace.

    Y must annihilate the same nullspace (up to tolerance), otherwise no
    finite eps certifies the pair.
    """
    w, v = sla.eigh(x)
    scale = max(abs(w[-1]), 1.0)
    keep = w > null_tol * scale
    if keep.all():
        return x, y, True
    nullspace = v[:, ~keep]
    y_scale = max(np.abs(y).max(), 1.0)
    if np.abs(y @ nullspace).max() > math.sqrt(null_tol) * y_scale:
        return None, None, False
    q = v[:, keep]
    return q.T @ x @ q, q.T @ y @ q, True


def approx_check(x, y, eps: float | None = None, *, slack: float = EIG_SLACK,
                 dense_limit: int = DENSE_LIMIT, null_tol: float = 1e-12) -> SpectralCert:
    """Certify the two-sided bound exp(eps) X >= Y >= exp(-eps) X densely.

    X must be positive definite (or positive semidefinite with Y sharing
    its nullspace, e.g. a pair of Laplacians of the same connected graph);
    Y must be positive semidefinite.  Returns the extreme generalized
    eigenvalues and the tightest eps they imply.
    """
    xd = _to_dense(x)
    yd = _to_dense(y)
    if xd.shape != yd.shape:
        raise ValueError(f"shape mismatch {xd.shape} vs {yd.shape}")
    if xd.shape[0] > dense_limit:
        raise ValueError(f"dense check refused for n={xd.shape[0]} > {dense_limit}")
    xd = 0.5 * (xd + xd.T)
    yd = 0.5 * (yd + yd.T)
    if xd.shape[0] == 0:
        return SpectralCert(1.0, 1.0, 0.0, eps, slack)

    try:  # cheap positive definiteness probe; skips the nullspace path
        np.linalg.cholesky(xd)
        definite = True
    except np.linalg.LinAlgError:
        definite = False
    if not definite:
        restricted = _restrict_to_range(xd, yd, null_tol)
        if not restricted[2]:
            return SpectralCert(0.0, math.inf, math.inf, eps, slack)
        xd, yd = restricted[0], restricted[1]
        if xd.shape[0] == 0:
            return SpectralCert(1.0, 1.0, 0.0, eps, slack)

    try:
        lam = sla.eigh(yd, xd, eigvals_only=True)
    except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
        raise ValueError("X is not positive definite") from exc
    lam_min, lam_max = float(lam[0]), float(lam[-1])
    if lam_min <= 0.0:
        tight = math.inf
    else:
        tight = max(abs(math.log(lam_min)), abs(math.log(lam_max)))
    return SpectralCert(lam_min, lam_max, tight, eps, slack)


def _random_spd(rng: np.random.Generator, n: int) -> np.ndarray:
    a = rng.standard_normal((n, n))
    return a @ a.T + n * np.eye(n)


def _spd_sqrt(x: np.ndarray) -> np.ndarray:
    w, v = sla.eigh(x)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def _perturb(rng: np.random.Generator, x: np.ndarray, eps: float) -> np.ndarray:
    """Random Y with X ~eps~ Y and the bound attained on both sides."""
    n = x.shape[0]
    w = _spd_sqrt(x)
    q = sla.qr(rng.standard_normal((n, n)))[0]
    s = rng.uniform(-eps, eps, size=n)
    if n >= 2:
        s[0], s[-1] = -eps, eps
    return w @ (q * np.exp(s)) @ q.T @ w


@dataclass
class Fact1Report:
    """Outcome of the random-instance algebra suite for the approximation order."""

    trials: int
    dim: int
    worst: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)

    @property
    def all_pass(self) -> bool:
        return not self.violations


def fact1_suite(trials: int = 25, dim: int = 12, seed: int = 0,
                slack: float = EIG_SLACK) -> Fact1Report:
    """Exercise the calculus of two-sided approximations on random matrices.

    Parts checked, each with a constructed quality eps:
      a. adding the same PSD matrix to both sides preserves eps;
      b. sums of two eps-pairs stay within eps;
      c. chaining eps1 and eps2 certifies at eps1 + eps2;
      d. inversion preserves eps for positive definite pairs;
      e. congruence by any (rectangular) V preserves eps.
    """
    rng = np.random.default_rng(seed)
    report = Fact1Report(trials=trials, dim=dim)

    def record(part: str, cert: SpectralCert, bound: float) -> None:
        prev = report.worst.get(part, 0.0)
        report.worst[part] = max(prev, cert.tightest_eps)
        if not math.isfinite(cert.tightest_eps) or cert.tightest_eps > bound + slack:
            report.violations.append((part, cert.tightest_eps, bound))

    for _ in range(trials):
        eps1 = float(rng.uniform(0.05, 0.3))
        eps2 = float(rng.uniform(0.05, 0.3))
        x = _random_spd(rng, dim)
        y = _perturb(rng, x, eps1)

        psd = _random_spd(rng, dim)
        record("a", approx_check(x + psd, y + psd), eps1)

        w = _random_spd(rng, dim)
        z = _perturb(rng, w, eps1)
        record("b", approx_check(x + w, y + z), eps1)

        z2 = _perturb(rng, y, eps2)
        record("c", approx_check(x, z2), eps1 + eps2)

        record("d", approx_check(sla.inv(x), sla.inv(y)), eps1)

        v = rng.standard_normal((dim, max(2, dim // 2)))
        record("e", approx_check(v.T @ x @ v, v.T @ y @ v), eps1)

    return report
