"""FastAPI service exposing the chain-solver pipeline.

Endpoints mirror the CLI verbs: gen, build-chain, solve, verify-chain,
verify-approx, bench.  Built chains are kept in an in-process store keyed
by the sha-256 of their manifest, so a long-running service builds a
chain once and serves many solves against it.
"""

from __future__ import annotations

import hashlib
import threading

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__, mmio
from ..bench import run_ladder
from ..chain import (
    ChainBuildError,
    ChainPlan,
    InverseChain,
    TERMINAL_EPS,
    build_chain,
    chain_from_payload,
    chain_stats_text,
    chain_to_payload,
    manifest_text,
    plan_chain,
    validate_chain,
)
from ..core import DiagMatrix, SddmSplitting, SymSparseMatrix
from ..generators import generate
from ..reductions import (
    GraphLaplacian,
    default_ground_index,
    ground,
    kappa_upper_bound,
    solve_laplacian,
)
from ..solver import precon_richardson
from ..verify import approx_check
from .models import (
    BenchRequest,
    BenchResponse,
    BenchRowModel,
    BuildChainRequest,
    BuildChainResponse,
    ChainOptions,
    ChainPayloadModel,
    GenRequest,
    GenResponse,
    HealthResponse,
    LevelBlob,
    SolveRequest,
    SolveResponse,
    VerifyApproxRequest,
    VerifyApproxResponse,
    VerifyChainRequest,
    VerifyChainResponse,
    config_hash,
)


class ChainStore:
    """Content-addressed in-memory chain cache."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._chains: dict[str, dict] = {}

    def put(self, chain: InverseChain, *, kind: str, ground_index: int | None) -> str:
        manifest = chain_to_payload(chain)["manifest"]
        chain_id = hashlib.sha256(manifest.encode()).hexdigest()[:16]
        with self._lock:
            self._chains[chain_id] = {
                "chain": chain, "kind": kind, "ground_index": ground_index,
            }
        return chain_id

    def get(self, chain_id: str) -> dict:
        with self._lock:
            entry = self._chains.get(chain_id)
        if entry is None:
            raise HTTPException(404, f"unknown chain id {chain_id!r}")
        return entry


def _parse_matrix(text: str) -> SymSparseMatrix:
    try:
        return mmio.matrix_from_text(text)
    except (ValueError, IndexError) as exc:
        raise HTTPException(400, f"bad matrix: {exc}") from exc


def _as_laplacian(m: SymSparseMatrix) -> GraphLaplacian:
    try:
        return GraphLaplacian(m)
    except ValueError as exc:
        raise HTTPException(400, f"bad adjacency: {exc}") from exc


def _as_sddm(m: SymSparseMatrix) -> SddmSplitting:
    rows, cols, vals = m.triples()
    off = rows != cols
    if vals[off].size and vals[off].max() > 0.0:
        raise HTTPException(400, "SDDM input must have non-positive off-diagonals")
    a = SymSparseMatrix._from_arrays(m.dim, rows[off], cols[off], -vals[off],
                                     _checked=True)
    try:
        s = SddmSplitting(DiagMatrix(m.diagonal()), a)
        s.validate()
    except ValueError as exc:
        raise HTTPException(400, f"bad SDDM matrix: {exc}") from exc
    return s


def _plan_for(system: SddmSplitting, opts: ChainOptions) -> ChainPlan:
    mode = opts.kappa_mode
    if mode == "auto":
        mode = "dense" if system.dim <= 4096 else "formula"
    try:
        kappa = kappa_upper_bound(system, mode)
        plan = plan_chain(kappa, budget=opts.budget, oversample=opts.oversample,
                          general_oversample=opts.general_oversample,
                          resparsify_threshold=opts.resparsify_threshold)
    except ValueError as exc:
        raise HTTPException(400, str(exc)) from exc
    if opts.eps_level is not None:
        plan = ChainPlan(
            depth=plan.depth, eps_levels=(float(opts.eps_level),) * plan.depth,
            terminal_eps=TERMINAL_EPS, kappa_hat=kappa,
            budget=max(opts.budget, plan.depth * opts.eps_level + TERMINAL_EPS + 0.1),
            oversample=opts.oversample, general_oversample=opts.general_oversample,
            resparsify_threshold=opts.resparsify_threshold)
    return plan


def _build(system: SddmSplitting, opts: ChainOptions) -> InverseChain:
    plan = _plan_for(system, opts)
    try:
        return build_chain(system, plan, seed=opts.seed, workers=opts.workers,
                           early_stop=opts.early_stop, oracle=opts.oracle)
    except ChainBuildError as exc:
        raise HTTPException(422, f"chain construction failed: {exc}") from exc


def create_app() -> FastAPI:
    app = FastAPI(title="invchain", version=__version__,
                  description="Approximate inverse chain solver for SDD systems")
    store = ChainStore()

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/gen", response_model=GenResponse)
    def gen(req: GenRequest) -> GenResponse:
        try:
            lap = generate(req.spec, seed=req.seed, w_low=req.weight_low,
                           w_high=req.weight_high)
        except ValueError as exc:
            raise HTTPException(400, str(exc)) from exc
        return GenResponse(
            matrix_mm=mmio.matrix_to_text(lap.adjacency), n=lap.dim,
            edges=lap.adjacency.nnz // 2, seed=req.seed, spec=req.spec,
            config_hash=config_hash(req))

    @app.post("/build-chain", response_model=BuildChainResponse)
    def build(req: BuildChainRequest) -> BuildChainResponse:
        m = _parse_matrix(req.matrix_mm)
        opts = req.options
        ground_index: int | None = None
        if req.kind == "laplacian":
            lap = _as_laplacian(m)
            ground_index = (default_ground_index(lap) if opts.ground_index is None
                            else opts.ground_index)
            try:
                system = ground(lap, ground_index)
            except (ValueError, IndexError) as exc:
                raise HTTPException(400, str(exc)) from exc
        else:
            system = _as_sddm(m)
        chain = _build(system, opts)
        chain_id = store.put(chain, kind=req.kind, ground_index=ground_index)

        validation_text = validation_pass = None
        if req.validate_mode != "none":
            report = validate_chain(chain, strict=(req.validate_mode == "strict"))
            validation_text = report.as_text()
            validation_pass = report.all_pass

        extra = {"kind": req.kind}
        if ground_index is not None:
            extra["ground_index"] = str(ground_index)
        payload = chain_to_payload(chain)
        manifest = manifest_text(chain, payload["levels"], extra=extra)
        return BuildChainResponse(
            chain_id=chain_id,
            manifest=manifest,
            stats_text=chain_stats_text(chain),
            validation_text=validation_text,
            validation_pass=validation_pass,
            chain=(ChainPayloadModel(
                manifest=manifest,
                levels=[LevelBlob(**lvl) for lvl in payload["levels"]])
                if req.include_levels else None),
            config_hash=config_hash(req),
            seed=opts.seed)

    @app.post("/solve", response_model=SolveResponse)
    def solve(req: SolveRequest) -> SolveResponse:
        try:
            b = mmio.vector_from_text(req.rhs_text)
        except ValueError as exc:
            raise HTTPException(400, f"bad right-hand side: {exc}") from exc

        chain = None
        kind = req.kind
        ground_index = req.ground_index
        if req.chain_id is not None:
            entry = store.get(req.chain_id)
            chain, kind = entry["chain"], entry["kind"]
            if ground_index is None:
                ground_index = entry["ground_index"]
        elif req.chain is not None:
            try:
                chain = chain_from_payload(req.chain.model_dump())
            except ValueError as exc:
                raise HTTPException(400, f"bad chain payload: {exc}") from exc
            fields = dict(line.split("=", 1)
                          for line in req.chain.manifest.splitlines() if "=" in line)
            kind = fields.get("kind", kind)
            if ground_index is None and "ground_index" in fields:
                ground_index = int(fields["ground_index"])

        if req.matrix_mm is None:
            raise HTTPException(400, "matrix_mm is required")
        m = _parse_matrix(req.matrix_mm)
        try:
            if kind == "laplacian":
                lap = _as_laplacian(m)
                if ground_index is None:
                    ground_index = default_ground_index(lap)
                if chain is None:
                    system = ground(lap, ground_index)
                    chain = _build(system, req.options)
                x, report = solve_laplacian(
                    lap, b, req.eps, seed=req.seed, workers=req.workers,
                    removed_index=ground_index, chain=chain)
            else:
                system = _as_sddm(m)
                if chain is None:
                    chain = _build(system, req.options)
                x, report = precon_richardson(system, chain, b, req.eps,
                                              workers=req.workers)
        except (ValueError, ChainBuildError) as exc:
            raise HTTPException(400, str(exc)) from exc

        chash = config_hash(req)
        report_lines = (f"config_hash={chash}\nseed={req.seed}\n"
                        + report.as_text() + "\n")
        return SolveResponse(
            solution_text=mmio.vector_to_text(x), report_text=report_lines,
            iterations=report.iterations, converged=report.converged,
            config_hash=chash, seed=req.seed)

    @app.post("/verify-chain", response_model=VerifyChainResponse)
    def verify_chain_ep(req: VerifyChainRequest) -> VerifyChainResponse:
        if req.chain is not None:
            try:
                chain = chain_from_payload(req.chain.model_dump())
            except ValueError as exc:
                raise HTTPException(400, f"bad chain payload: {exc}") from exc
        elif req.chain_id is not None:
            chain = store.get(req.chain_id)["chain"]
        else:
            raise HTTPException(400, "provide chain or chain_id")
        report = validate_chain(chain, strict=req.strict)
        return VerifyChainResponse(report_text=report.as_text(),
                                   all_pass=report.all_pass,
                                   violations=list(report.violations))

    @app.post("/verify-approx", response_model=VerifyApproxResponse)
    def verify_approx_ep(req: VerifyApproxRequest) -> VerifyApproxResponse:
        x = _parse_matrix(req.x_mm)
        y = _parse_matrix(req.y_mm)
        try:
            cert = approx_check(x, y, req.eps)
        except ValueError as exc:
            raise HTTPException(400, str(exc)) from exc
        return VerifyApproxResponse(
            lam_min=cert.lam_min, lam_max=cert.lam_max,
            tightest_eps=cert.tightest_eps, requested_eps=cert.requested_eps,
            passed=cert.passed)

    @app.post("/bench", response_model=BenchResponse)
    def bench_ep(req: BenchRequest) -> BenchResponse:
        try:
            result = run_ladder(
                req.widths, eps=req.eps, seed=req.seed, workers=req.workers,
                budget=req.budget, eps_level=req.eps_level, oracle=req.oracle,
                validate=req.validate_chains, with_manifest_sha=True)
        except (ValueError, ChainBuildError, RuntimeError) as exc:
            raise HTTPException(400, str(exc)) from exc
        rows = [BenchRowModel(
            width=r.width, n=r.n, edges=r.edges, kappa_hat=r.kappa_hat,
            depth=r.depth, level_nnz=r.level_nnz, total_nnz=r.total_nnz,
            build_seconds=r.build_seconds, solve_iterations=r.solve_iterations,
            solve_seconds=r.solve_seconds, rel_residual=r.rel_residual,
            manifest_sha=r.manifest_sha) for r in result.rows]
        chash = config_hash(req)
        table = (f"config_hash={chash}\nseed={req.seed}\n" + result.as_text())
        return BenchResponse(table_text=table, fit_exponent=result.fit_exponent,
                             rows=rows, config_hash=chash, seed=req.seed)

    return app


app = create_app()
