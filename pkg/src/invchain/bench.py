"""Build-and-solve ladder over grounded 2D grids.

For each grid width the bench grounds the Laplacian, plans and builds a
chain, solves one fixed right-hand side to the target accuracy, and
collects size and timing figures.  The log-log slope of total chain size
against vertex count summarizes how the construction scales.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .chain import (
    TERMINAL_EPS,
    ChainPlan,
    build_chain,
    chain_to_payload,
    plan_chain,
    validate_chain,
)
from .generators import gen_grid2d
from .reductions import (
    GraphLaplacian,
    default_ground_index,
    ground,
    kappa_upper_bound,
    solve_laplacian,
)
from .streams import STREAM_GENERATE, stream

__all__ = ["BenchRow", "BenchResult", "run_ladder", "fit_exponent"]


@dataclass
class BenchRow:
    width: int
    n: int
    edges: int
    kappa_hat: float
    depth: int
    level_nnz: list
    total_nnz: int
    build_seconds: float
    solve_iterations: int
    solve_seconds: float
    rel_residual: float
    manifest_sha: str = ""


@dataclass
class BenchResult:
    rows: list = field(default_factory=list)
    fit_exponent: float = 0.0
    eps: float = 0.0
    seed: int = 0

    def as_text(self) -> str:
        header = (f"{'width':>6} {'n':>7} {'kappa':>12} {'depth':>5} {'total_nnz':>11} "
                  f"{'build_s':>8} {'iters':>6} {'solve_s':>8} {'residual':>10}")
        lines = [header]
        for r in self.rows:
            lines.append(
                f"{r.width:>6} {r.n:>7} {r.kappa_hat:>12.4g} {r.depth:>5} "
                f"{r.total_nnz:>11} {r.build_seconds:>8.2f} {r.solve_iterations:>6} "
                f"{r.solve_seconds:>8.2f} {r.rel_residual:>10.3g}")
        lines.append(f"total-size fit exponent (log-log vs n): {self.fit_exponent:.3f}")
        return "\n".join(lines)


def fit_exponent(ns, totals) -> float:
    """Least-squares slope of log(total) against log(n)."""
    xs = np.log(np.asarray(ns, dtype=np.float64))
    ys = np.log(np.asarray(totals, dtype=np.float64))
    if xs.size < 2:
        return 0.0
    return float(np.polyfit(xs, ys, 1)[0])


def run_ladder(widths, eps: float = 1e-8, seed: int = 0, workers: int = 1, *,
               budget: float = 2.0, eps_level: float | None = None,
               resparsify_threshold: float = 16.0, oracle: str = "dense",
               kappa_mode: str = "auto", validate: bool = False,
               with_manifest_sha: bool = False) -> BenchResult:
    """Run the grid ladder; one row per width."""
    import hashlib

    result = BenchResult(eps=eps, seed=seed)
    for width in widths:
        adj = gen_grid2d(width, width, seed=seed)
        lap = GraphLaplacian(adj)
        grounded = ground(lap)
        mode = kappa_mode
        if mode == "auto":
            mode = "dense" if lap.dim <= 4096 else "formula"
        kappa = kappa_upper_bound(grounded, mode)
        plan = plan_chain(kappa, budget=budget,
                          resparsify_threshold=resparsify_threshold)
        if eps_level is not None:
            # flat per-level override; the budget stretches to keep the
            # schedule self-consistent (convergence degrades accordingly)
            plan = ChainPlan(
                depth=plan.depth,
                eps_levels=(float(eps_level),) * plan.depth,
                terminal_eps=TERMINAL_EPS,
                kappa_hat=kappa,
                budget=max(budget, plan.depth * eps_level + TERMINAL_EPS + 0.1),
                resparsify_threshold=resparsify_threshold)

        t0 = time.perf_counter()
        chain = build_chain(grounded, plan, seed=seed, workers=workers, oracle=oracle)
        build_s = time.perf_counter() - t0
        if validate:
            report = validate_chain(chain)
            if not report.all_pass:
                raise RuntimeError("bench chain failed validation:\n" + report.as_text())

        rng = stream(seed, STREAM_GENERATE, width)
        b = rng.standard_normal(lap.dim)
        b -= b.mean()
        t0 = time.perf_counter()
        x, solve_report = solve_laplacian(lap, b, eps, seed=seed, workers=workers,
                                          chain=chain)
        solve_s = time.perf_counter() - t0
        resid = lap.matvec(x) - b
        rel = float(np.linalg.norm(resid) / np.linalg.norm(b))

        manifest_sha = ""
        if with_manifest_sha:
            manifest_sha = hashlib.sha256(
                chain_to_payload(chain)["manifest"].encode()).hexdigest()

        result.rows.append(BenchRow(
            width=width, n=lap.dim, edges=adj.nnz // 2, kappa_hat=kappa,
            depth=chain.depth, level_nnz=[lvl.a.nnz for lvl in chain.levels],
            total_nnz=chain.total_nnz, build_seconds=build_s,
            solve_iterations=solve_report.iterations, solve_seconds=solve_s,
            rel_residual=rel, manifest_sha=manifest_sha))
    result.fit_exponent = fit_exponent([r.n for r in result.rows],
                                       [r.total_nnz for r in result.rows])
    return result
