"""The crude V-cycle pass and the preconditioned Richardson wrapper.

``crude_solve`` applies the chain operator Z: a forward sweep multiplies
the right-hand side by each level's (I + A_i D_i^-1), the terminal level
inverts its diagonal, and a backward sweep averages D_i^-1 b_i with
(I + D_i^-1 A_i) x_{i+1}.  Multiplying by each level's factor on both
sweeps makes Z a symmetric linear operator, and the chain certificate c
= sum(eps_i) + eps_d bounds its distance from M0^-1 on the log scale:
the eigenvalues of Z M0 lie in [exp(-c), exp(c)].

``precon_richardson`` then iterates  x <- x + alpha Z (b - M0 x)  from
x = 0.  The damping alpha = 2 / (exp(c) + exp(-c)) centers the spectrum
of alpha Z M0 around 1, giving the M-norm error a contraction factor of
rho = tanh(c) per step.  Iteration stops at the a-priori bound
rho^k / (1 - rho) <= eps or earlier when the computable residual proxy
sqrt(r^T Z r), corrected by exp(+-c), certifies the target accuracy.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .chain import InverseChain
from .core import DimensionMismatchError, SddmSplitting, apply_halfcycle_factor

__all__ = [
    "SolverConfig",
    "SolveReport",
    "crude_solve",
    "crude_solve_matrix",
    "m_norm",
    "precon_richardson",
    "richardson_iteration_bound",
]


@dataclass(frozen=True)
class SolverConfig:
    """Richardson controls; fields default to values derived from the chain."""

    eps_target: float = 1e-8
    max_iterations: int | None = None
    damping: float | None = None        # alpha; derived from budget_c if None
    budget_c: float | None = None       # certified log-distance of Z from M^-1
    use_proxy_stop: bool = True
    fixed_iterations: int | None = None  # run exactly this many steps


@dataclass
class SolveReport:
    """Iteration trace and work statistics for one solve."""

    iterations: int = 0
    residual_proxies: list = field(default_factory=list)
    contraction: float = 0.0
    damping: float = 0.0
    budget_c: float = 0.0
    iteration_bound: int = 0
    flops_estimate: float = 0.0
    wall_time: float = 0.0
    converged: bool = False

    def as_text(self) -> str:
        lines = [
            f"iterations={self.iterations} (bound {self.iteration_bound})",
            f"converged={self.converged}",
            f"contraction_rho={self.contraction:.6g} damping_alpha={self.damping:.6g} "
            f"budget_c={self.budget_c:.6g}",
            f"flops_estimate={self.flops_estimate:.4g} wall_time={self.wall_time:.4g}s",
        ]
        if self.residual_proxies:
            lines.append(f"first_proxy={self.residual_proxies[0]:.6g} "
                         f"last_proxy={self.residual_proxies[-1]:.6g}")
        return "\n".join(lines)


def m_norm(s: SddmSplitting, x: np.ndarray) -> float:
    """sqrt(x^T (D - A) x); raises if the form is negative beyond roundoff."""
    x = np.asarray(x, dtype=np.float64)
    q = float(x @ s.matvec(x))
    scale = float(x @ (s.d.values * x)) + 1e-300
    if q < -1e-12 * scale:
        raise ValueError(f"quadratic form is negative ({q:g}); splitting invalid")
    return math.sqrt(max(q, 0.0))


def crude_solve(chain: InverseChain, b: np.ndarray, workers: int = 1) -> np.ndarray:
    """One V-cycle pass of the chain operator Z applied to b."""
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (chain.dim,):
        raise DimensionMismatchError(f"rhs has shape {b.shape}, chain dim {chain.dim}")
    d = chain.depth
    levels = chain.levels
    forwards = [b]
    for i in range(d):
        forwards.append(apply_halfcycle_factor(
            levels[i].d, levels[i].a, forwards[i], "right", workers=workers))
    x = levels[d].d.inv_matvec(forwards[d])
    for i in range(d - 1, -1, -1):
        x = 0.5 * (levels[i].d.inv_matvec(forwards[i])
                   + apply_halfcycle_factor(levels[i].d, levels[i].a, x, "left",
                                            workers=workers))
    return x


def crude_solve_matrix(chain: InverseChain, b: np.ndarray) -> np.ndarray:
    """Z applied to each column of a dense block (for dense certification)."""
    b = np.asarray(b, dtype=np.float64)
    d = chain.depth
    levels = chain.levels
    forwards = [b]
    for i in range(d):
        cur = forwards[i]
        forwards.append(cur + levels[i].a.matmat(cur / levels[i].d.values[:, None]))
    x = forwards[d] / levels[d].d.values[:, None]
    for i in range(d - 1, -1, -1):
        back = x + levels[i].a.matmat(x) / levels[i].d.values[:, None]
        x = 0.5 * (forwards[i] / levels[i].d.values[:, None] + back)
    return x


def richardson_iteration_bound(eps: float, rho: float) -> int:
    """Smallest k with rho^k / (1 - rho) <= eps."""
    if rho <= 0.0:
        return 1
    return max(1, math.ceil(math.log(1.0 / (eps * (1.0 - rho))) / math.log(1.0 / rho)))


def precon_richardson(m0: SddmSplitting, chain: InverseChain, b: np.ndarray,
                      eps: float, *, config: SolverConfig | None = None,
                      workers: int = 1) -> tuple[np.ndarray, SolveReport]:
    """Solve (D0 - A0) x = b to relative M-norm accuracy eps.

    Guarantees ||x - x*||_M <= eps ||x*||_M via the chain certificate;
    gives up (``converged=False``, best iterate returned) only when a
    user-set ``max_iterations`` is below the a-priori bound.
    """
    if not (0.0 < eps <= 0.5):
        raise ValueError(f"eps must lie in (0, 1/2], got {eps}")
    if m0.dim != chain.dim:
        raise DimensionMismatchError(
            f"system dim {m0.dim} does not match chain dim {chain.dim}")
    cfg = config or SolverConfig()
    started = time.perf_counter()

    c = cfg.budget_c if cfg.budget_c is not None else chain.budget_total
    alpha = cfg.damping if cfg.damping is not None else 2.0 / (math.exp(c) + math.exp(-c))
    rho = math.tanh(c)
    bound = richardson_iteration_bound(eps, rho)
    limit = bound if cfg.fixed_iterations is None else cfg.fixed_iterations
    if cfg.max_iterations is not None:
        limit = min(limit, cfg.max_iterations)

    report = SolveReport(contraction=rho, damping=alpha, budget_c=c,
                         iteration_bound=bound)
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros_like(b)
    nnz_work = 2 * (sum(2 * lvl.a.nnz + 2 * lvl.d.dim for lvl in chain.levels)
                    + m0.nnz + m0.dim)

    z0 = crude_solve(chain, b, workers=workers)
    proxy0 = math.sqrt(max(float(b @ z0), 0.0))
    # ||x*||_M^2 >= e^-c b^T Z b and ||e_k||_M^2 <= e^c r^T Z r, so this
    # threshold certifies the relative M-norm target
    proxy_tol = eps * math.exp(-c) * proxy0
    report.residual_proxies.append(proxy0)
    if proxy0 == 0.0:
        report.converged = True
        report.wall_time = time.perf_counter() - started
        return x, report

    z = z0
    while True:
        x = x + alpha * z
        report.iterations += 1
        report.flops_estimate += nnz_work
        if cfg.fixed_iterations is not None:
            if report.iterations >= cfg.fixed_iterations:
                report.converged = True
                break
            r = b - m0.matvec(x, workers=workers)
            z = crude_solve(chain, r, workers=workers)
            continue
        if report.iterations >= bound:
            report.converged = True  # a-priori bound reached
            break
        if report.iterations >= limit:
            report.converged = False
            break
        r = b - m0.matvec(x, workers=workers)
        z = crude_solve(chain, r, workers=workers)
        proxy = math.sqrt(max(float(r @ z), 0.0))
        report.residual_proxies.append(proxy)
        if cfg.use_proxy_stop and proxy <= proxy_tol:
            report.converged = True
            break

    report.wall_time = time.perf_counter() - started
    return x, report
