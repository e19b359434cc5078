"""Request and response schemas for the solver service.

Matrices travel as Matrix Market text, vectors as whitespace-separated
decimal text.  Worker counts are execution details and are excluded from
config hashes so that runs differing only in parallelism hash alike.
"""

from __future__ import annotations

import hashlib
import json
from typing import Literal, Optional

from pydantic import BaseModel, Field


def config_hash(model: BaseModel, *, exclude: set[str] = frozenset({"workers"})) -> str:
    payload = model.model_dump(exclude=set(exclude))
    blob = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


class GenRequest(BaseModel):
    spec: str = Field(description="generator spec, e.g. 'grid2d 8x8' or 'path 16'")
    seed: int = 0
    weight_low: float = 1.0
    weight_high: float = 1.0


class GenResponse(BaseModel):
    matrix_mm: str
    n: int
    edges: int
    seed: int
    spec: str
    config_hash: str


class ChainOptions(BaseModel):
    seed: int = 0
    workers: int = 1
    budget: float = 2.0
    eps_level: Optional[float] = None
    oversample: float = 4.0
    general_oversample: float = 4.0
    resparsify_threshold: float = 16.0
    oracle: Literal["dense", "none"] = "dense"
    kappa_mode: Literal["auto", "dense", "formula"] = "auto"
    early_stop: bool = True
    ground_index: Optional[int] = None


class LevelBlob(BaseModel):
    d: str
    a: str


class ChainPayloadModel(BaseModel):
    manifest: str
    levels: list[LevelBlob]


class BuildChainRequest(BaseModel):
    matrix_mm: str
    kind: Literal["laplacian", "sddm"] = "laplacian"
    options: ChainOptions = ChainOptions()
    include_levels: bool = True
    validate_mode: Literal["none", "lenient", "strict"] = "lenient"


class BuildChainResponse(BaseModel):
    chain_id: str
    manifest: str
    stats_text: str
    validation_text: Optional[str] = None
    validation_pass: Optional[bool] = None
    chain: Optional[ChainPayloadModel] = None
    config_hash: str
    seed: int


class SolveRequest(BaseModel):
    matrix_mm: Optional[str] = None
    kind: Literal["laplacian", "sddm"] = "laplacian"
    rhs_text: str
    eps: float = 1e-8
    seed: int = 0
    workers: int = 1
    ground_index: Optional[int] = None
    chain_id: Optional[str] = None
    chain: Optional[ChainPayloadModel] = None
    options: ChainOptions = ChainOptions()


class SolveResponse(BaseModel):
    solution_text: str
    report_text: str
    iterations: int
    converged: bool
    config_hash: str
    seed: int


class VerifyChainRequest(BaseModel):
    chain: Optional[ChainPayloadModel] = None
    chain_id: Optional[str] = None
    strict: Optional[bool] = None


class VerifyChainResponse(BaseModel):
    report_text: str
    all_pass: bool
    violations: list[str]


class VerifyApproxRequest(BaseModel):
    x_mm: str
    y_mm: str
    eps: Optional[float] = None


class VerifyApproxResponse(BaseModel):
    lam_min: float
    lam_max: float
    tightest_eps: float
    requested_eps: Optional[float]
    passed: bool


class BenchRequest(BaseModel):
    widths: list[int] = Field(default=[8, 16, 32])
    eps: float = 1e-8
    seed: int = 0
    workers: int = 1
    budget: float = 2.0
    eps_level: Optional[float] = None
    oracle: Literal["dense", "none"] = "dense"
    validate_chains: bool = False


class BenchRowModel(BaseModel):
    width: int
    n: int
    edges: int
    kappa_hat: float
    depth: int
    level_nnz: list[int]
    total_nnz: int
    build_seconds: float
    solve_iterations: int
    solve_seconds: float
    rel_residual: float
    manifest_sha: str = ""


class BenchResponse(BaseModel):
    table_text: str
    fit_exponent: float
    rows: list[BenchRowModel]
    config_hash: str
    seed: int


class HealthResponse(BaseModel):
    status: str
    version: str
