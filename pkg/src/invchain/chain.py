"""Approximate inverse chains: planning, construction, validation, storage.

A chain for M0 = D0 - A0 is a sequence of splittings (D_i, A_i) with
per-level qualities eps_i and a terminal quality eps_d such that

  (a)  D_{i+1} - A_{i+1}  matches  D_i - A_i D_i^-1 A_i  within eps_i,
  (b)  D_{i+1}            matches  D_i                   within eps_i,
  (c)  D_d                matches  D_d - A_d             within eps_d,

with the total budget sum(eps_i) + eps_d bounded (2 by default).  Each
level is produced by the clique-sampled squaring step (half the level
budget) optionally followed by whole-matrix resistance sparsification
(the other half).  Construction stops early once the top eigenvalue of
D^-1 A drops to 2/3, at which point the diagonal certifies the rest.

Recorded eps values are certificates, not estimates: the builder records
the sampling budget actually spent (zero for levels that squared
exactly), enlarged to the exactly measured diagonal ratio where needed,
so validation at the recorded values is meaningful at any scale.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from . import mmio
from .core import DiagMatrix, SddmSplitting, SymSparseMatrix
from .sparsify import ResistanceOracle, SparsifyFailure, sparsify_splitting
from .squaring import exact_square, sparse_square
from .streams import STREAM_LEVEL, stream
from .verify import approx_check

__all__ = [
    "GROWTH_BASE",
    "STOP_LAMBDA",
    "TERMINAL_EPS",
    "ChainBuildError",
    "ChainLevel",
    "ChainPlan",
    "ChainValidation",
    "InverseChain",
    "build_chain",
    "chain_from_dir",
    "chain_from_payload",
    "chain_stats_text",
    "chain_to_dir",
    "chain_to_payload",
    "lambda_extreme",
    "manifest_text",
    "plan_chain",
    "validate_chain",
]

GROWTH_BASE = 4.0 / 3.0
STOP_LAMBDA = 2.0 / 3.0
TERMINAL_EPS = math.log(3.0)
_STOP_MARGIN = 5e-3
_MIN_BUDGET = 4.0 * TERMINAL_EPS / 3.0  # below this the schedule cannot close


class ChainBuildError(RuntimeError):
    """Chain construction failed after all attempts."""


@dataclass(frozen=True)
class ChainPlan:
    """Depth and per-level quality schedule for one chain build."""

    depth: int
    eps_levels: tuple
    terminal_eps: float
    kappa_hat: float
    budget: float
    oversample: float = 4.0            # clique step constant
    general_oversample: float = 4.0    # whole-matrix sparsifier constant
    resparsify_threshold: float = 16.0  # resample when nnz > thr * n * ln n

    def __post_init__(self):
        total = sum(self.eps_levels) + self.terminal_eps
        if total > self.budget + 1e-12:
            raise ValueError(f"schedule {total:g} exceeds budget {self.budget:g}")

    def level_eps(self, i: int) -> float:
        if self.depth == 0:
            return 1.0 / 9.0
        return self.eps_levels[min(i, self.depth - 1)]


def plan_chain(kappa_hat: float, budget: float = 2.0, *, oversample: float = 4.0,
               general_oversample: float = 4.0,
               resparsify_threshold: float = 16.0) -> ChainPlan:
    """Schedule a chain for condition number bound kappa_hat.

    Depth is log base 4/3 of kappa_hat (rounded up); every level gets
    quality min(1/9, budget / 4d), which is 1/(2d) at the default budget,
    and ln 3 is reserved for the terminal certificate.
    """
    if not (kappa_hat >= 1.0):
        raise ValueError(f"kappa_hat must be at least 1, got {kappa_hat}")
    if budget < _MIN_BUDGET:
        raise ValueError(f"budget must be at least {_MIN_BUDGET:.4f}, got {budget}")
    if kappa_hat == 1.0:
        depth = 0
    else:
        depth = max(0, math.ceil(math.log(kappa_hat) / math.log(GROWTH_BASE) - 1e-12))
    eps = min(1.0 / 9.0, budget / (4.0 * depth)) if depth else None
    return ChainPlan(
        depth=depth,
        eps_levels=tuple([eps] * depth if depth else []),
        terminal_eps=TERMINAL_EPS,
        kappa_hat=float(kappa_hat),
        budget=float(budget),
        oversample=oversample,
        general_oversample=general_oversample,
        resparsify_threshold=resparsify_threshold,
    )


@dataclass(frozen=True)
class ChainLevel:
    """One chain level: splitting (D, A) plus the quality consumed below it."""

    d: DiagMatrix
    a: SymSparseMatrix
    eps: float = 0.0

    @property
    def splitting(self) -> SddmSplitting:
        return SddmSplitting(self.d, self.a)


@dataclass
class InverseChain:
    """Built chain; immutable in spirit, safe to share across solves."""

    levels: list
    terminal_eps: float
    seed: int
    kappa_hat: float
    budget: float

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    @property
    def dim(self) -> int:
        return self.levels[0].d.dim

    @property
    def eps_values(self) -> list:
        return [lvl.eps for lvl in self.levels[:-1]]

    @property
    def budget_total(self) -> float:
        """Certified distance of the V-cycle operator from M0^-1 (log scale)."""
        return sum(self.eps_values) + self.terminal_eps

    @property
    def total_nnz(self) -> int:
        return sum(lvl.a.nnz for lvl in self.levels)

    def level_splitting(self, i: int) -> SddmSplitting:
        return self.levels[i].splitting


# ---------------------------------------------------------------------------
# spectral probes
# ---------------------------------------------------------------------------

def lambda_extreme(s: SddmSplitting, which: str = "max") -> float:
    """Extreme eigenvalue of D^-1 A (symmetrized), deterministic.

    Dense below 128; Lanczos with a fixed start vector above.  Results
    are estimates from below for ``max`` and from above for ``min``;
    callers add their own safety margins.
    """
    n = s.dim
    if s.a.nnz == 0:
        return 0.0
    inv_sqrt = 1.0 / np.sqrt(s.d.values)
    if n <= 128:
        lam = sla.eigvalsh(inv_sqrt[:, None] * s.a.to_dense() * inv_sqrt)
        return float(lam[-1] if which == "max" else lam[0])

    def op(v):
        return inv_sqrt * s.a.matvec(inv_sqrt * v)

    lin = spla.LinearOperator((n, n), matvec=op, dtype=np.float64)
    v0 = np.full(n, 1.0 / math.sqrt(n))
    try:
        vals = spla.eigsh(lin, k=1, which="LA" if which == "max" else "SA",
                          v0=v0, tol=1e-9, maxiter=2000,
                          return_eigenvectors=False)
        return float(vals[0])
    except spla.ArpackNoConvergence as exc:
        if exc.eigenvalues is not None and len(exc.eigenvalues):
            return float(exc.eigenvalues[0])
        raise ChainBuildError("eigenvalue probe failed to converge") from exc


def _diag_ratio_eps(d_new: np.ndarray, d_old: np.ndarray) -> float:
    """Exact condition (b) quality: max |ln(D_new / D_old)| entrywise."""
    return float(np.abs(np.log(d_new / d_old)).max()) if d_new.size else 0.0


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

def _terminal_candidates(levels, spents, lam_max):
    """Pick the cheaper of folding diag(A_d) into D_d or keeping as built.

    Folding preserves the terminal matrix, zeroes the terminal quality
    when A_d is diagonal, and never raises the top eigenvalue; it costs a
    bump of the last recorded level quality to the realized diagonal
    ratio.  Whichever variant certifies the smaller total wins.
    """
    last = levels[-1]
    y = last.a.diagonal()
    terminal_plain = _terminal_eps_for(lam_max, last.a.nnz)

    if not y.any():
        return levels, spents, terminal_plain
    d_fold = last.d.values - y
    if d_fold.min() <= 0.0:
        return levels, spents, terminal_plain
    a_fold = last.a.offdiagonal()
    term_fold = _terminal_eps_for(lam_max, a_fold.nnz)
    if len(levels) >= 2:
        bump = max(spents[-1], _diag_ratio_eps(d_fold, levels[-2].d.values))
        fold_cost = (term_fold + bump) - (terminal_plain + spents[-1])
    else:
        bump = 0.0
        fold_cost = term_fold - terminal_plain
    if fold_cost >= 0.0:
        return levels, spents, terminal_plain
    folded = ChainLevel(DiagMatrix(d_fold), a_fold)
    new_spents = list(spents)
    if new_spents:
        new_spents[-1] = bump
    return levels[:-1] + [folded], new_spents, term_fold


def _terminal_eps_for(lam_max: float, nnz: int) -> float:
    if nnz == 0:
        return 0.0
    if lam_max <= STOP_LAMBDA + 1e-9:
        return TERMINAL_EPS
    lam = min(lam_max * 1.05 + 1e-4, 1.0 - 1e-9)
    return max(TERMINAL_EPS, math.log(1.0 / (1.0 - lam)))


def build_chain(s: SddmSplitting, plan: ChainPlan, seed: int = 0, *,
                workers: int = 1, early_stop: bool = True,
                extend_past_plan: bool = True, fold_terminal: bool = True,
                oracle: str = "dense", validate: str = "none",
                dense_limit: int = 4096, max_attempts: int = 8) -> InverseChain:
    """Build an approximate inverse chain for the splitting.

    Levels alternate a squaring step (first half of the level budget)
    with an optional resistance resparsification (second half, only when
    the level outgrows ``plan.resparsify_threshold * n * ln n`` entries
    and the ``oracle`` option is not ``"none"``).  With ``early_stop``
    the chain ends as soon as the top eigenvalue of D^-1 A reaches 2/3;
    otherwise it runs to the planned depth, extending past it only when
    the terminal certificate is otherwise unreachable.

    Randomized attempts are retried up to ``max_attempts`` times on
    sampling failures (and on validation failures when ``validate`` is
    ``"strict"`` or ``"lenient"``).
    """
    s.d.require_positive("SDDM diagonal")
    failures = []
    for attempt in range(max_attempts):
        try:
            chain = _build_once(s, plan, seed, attempt, workers, early_stop,
                                extend_past_plan, fold_terminal, oracle)
        except (SparsifyFailure, ValueError) as exc:
            failures.append(f"attempt {attempt}: {exc}")
            continue
        if validate == "none":
            return chain
        report = validate_chain(chain, strict=(validate == "strict"),
                                dense_limit=dense_limit)
        if report.all_pass:
            return chain
        failures.append(f"attempt {attempt}: {'; '.join(report.violations)}")
    raise ChainBuildError("chain construction failed: " + " | ".join(failures))


def _build_once(s, plan, seed, attempt, workers, early_stop, extend_past_plan,
                fold_terminal, oracle_opt):
    n = s.dim
    ln_n = math.log(max(n, 2))
    resparsify_at = plan.resparsify_threshold * n * ln_n
    oracle = ResistanceOracle() if oracle_opt == "dense" else None
    hard_cap = max(2 * plan.depth + 4, plan.depth, 8)

    levels = [ChainLevel(s.d, s.a)]
    spents = []
    cur = s
    lam = lambda_extreme(cur, "max")
    while True:
        done_plan = len(spents) >= plan.depth
        if lam <= STOP_LAMBDA - _STOP_MARGIN and (early_stop or done_plan):
            break
        if done_plan and not (extend_past_plan and lam > STOP_LAMBDA - _STOP_MARGIN):
            break
        if len(spents) >= hard_cap:
            raise ValueError(
                f"terminal eigenvalue {lam:.4f} still above 2/3 after {hard_cap} levels")
        i = len(spents)
        eps_i = plan.level_eps(i)
        child = int(stream(seed, STREAM_LEVEL, attempt, i).integers(2 ** 62))

        stats: dict = {}
        nxt = sparse_square(cur, eps_i / 2.0, seed=child,
                            oversample=plan.oversample, workers=workers,
                            stats=stats)
        spent = 0.0 if stats.get("exact", True) else eps_i / 2.0

        if oracle is not None and nxt.a.nnz > resparsify_at:
            resampled = sparsify_splitting(
                nxt, eps_i / 2.0, seed=child,
                oversample=plan.general_oversample, oracle=oracle)
            if resampled is not nxt:
                spent += eps_i / 2.0
                nxt = resampled

        nxt.validate()
        # recorded quality is a certificate: cover the exactly measured
        # diagonal ratio in case sampling drifted past its budget
        spent = max(spent, _diag_ratio_eps(nxt.d.values, cur.d.values))
        levels.append(ChainLevel(nxt.d, nxt.a))
        spents.append(spent)
        cur = nxt
        lam = lambda_extreme(cur, "max")

    terminal = _terminal_eps_for(lam, levels[-1].a.nnz)
    if fold_terminal:
        levels, spents, terminal = _terminal_candidates(levels, spents, lam)
    levels = [ChainLevel(lvl.d, lvl.a, spents[i]) if i < len(spents) else lvl
              for i, lvl in enumerate(levels)]
    return InverseChain(levels=levels, terminal_eps=terminal, seed=seed,
                        kappa_hat=plan.kappa_hat, budget=plan.budget)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

@dataclass
class LevelCheck:
    index: int
    eps_recorded: float
    eps_b_measured: float
    pass_b: bool
    eps_a_measured: float | None = None
    pass_a: bool | None = None


@dataclass
class ChainValidation:
    strict: bool
    levels: list = field(default_factory=list)
    terminal_recorded: float = 0.0
    terminal_measured: float | None = None
    pass_terminal: bool | None = None
    budget_total: float = 0.0
    budget_limit: float = 2.0
    pass_budget: bool = True
    window_checked: bool = False
    window_lam_min: float | None = None
    window_lam_max: float | None = None
    pass_window: bool | None = None
    violations: list = field(default_factory=list)

    @property
    def all_pass(self) -> bool:
        return not self.violations

    def as_text(self) -> str:
        lines = [f"chain validation ({'strict' if self.strict else 'lenient'})"]
        for lc in self.levels:
            a_part = ("eps_a=unchecked" if lc.eps_a_measured is None
                      else f"eps_a={lc.eps_a_measured:.3e} pass_a={lc.pass_a}")
            lines.append(
                f"  level {lc.index}: eps_recorded={lc.eps_recorded:.6g} "
                f"eps_b={lc.eps_b_measured:.3e} pass_b={lc.pass_b} {a_part}")
        term = ("unchecked" if self.terminal_measured is None
                else f"{self.terminal_measured:.6g}")
        lines.append(f"  terminal: recorded={self.terminal_recorded:.6g} "
                     f"measured={term} pass={self.pass_terminal}")
        lines.append(f"  budget: total={self.budget_total:.6g} "
                     f"limit={self.budget_limit:.6g} pass={self.pass_budget}")
        if self.window_checked:
            lines.append(
                f"  terminal window: [{self.window_lam_min:.6g}, "
                f"{self.window_lam_max:.6g}] pass={self.pass_window}")
        lines.append("  violations: " + ("none" if self.all_pass
                                         else "; ".join(self.violations)))
        return "\n".join(lines)


_WINDOW_LOW = 1.0 - math.exp(2.0 / 9.0)
_WINDOW_SLACK = 1e-6


def validate_chain(chain: InverseChain, strict: bool | None = None, *,
                   dense_limit: int = 4096, slack: float = 1e-9) -> ChainValidation:
    """Check chain conditions (a), (b), (c) plus the budget and terminal window.

    ``strict`` adds the dense checks (condition (a) against the exactly
    squared previous level, dense terminal certificate and eigenvalue
    window); it defaults to on when the chain is small enough.  Returns a
    report and never raises.
    """
    if strict is None:
        strict = chain.dim <= dense_limit
    report = ChainValidation(strict=strict, budget_limit=chain.budget)
    try:
        _validate_into(chain, report, strict, dense_limit, slack)
    except Exception as exc:  # pragma: no cover - defensive catch-all
        report.violations.append(f"validation error: {exc}")
    return report


def _validate_into(chain, report, strict, dense_limit, slack):
    d = chain.depth
    for i in range(d):
        cur = chain.levels[i]
        nxt = chain.levels[i + 1]
        eps_rec = chain.levels[i].eps
        eps_b = _diag_ratio_eps(nxt.d.values, cur.d.values)
        ok_b = eps_b <= eps_rec + slack
        check = LevelCheck(index=i, eps_recorded=eps_rec,
                           eps_b_measured=eps_b, pass_b=ok_b)
        if not ok_b:
            report.violations.append(
                f"level {i}: diagonal ratio {eps_b:.3e} exceeds recorded {eps_rec:.3e}")
        if strict and chain.dim <= dense_limit:
            target = exact_square(cur.splitting)
            cert = approx_check(target.to_dense(), nxt.splitting.to_dense(),
                                eps_rec, slack=slack, dense_limit=dense_limit)
            check.eps_a_measured = cert.tightest_eps
            check.pass_a = cert.passed
            if not cert.passed:
                report.violations.append(
                    f"level {i}: squared-step quality {cert.tightest_eps:.3e} "
                    f"exceeds recorded {eps_rec:.3e}")
        report.levels.append(check)

    last = chain.levels[-1]
    report.terminal_recorded = chain.terminal_eps
    if strict and chain.dim <= dense_limit:
        cert = approx_check(last.d.to_dense(), last.splitting.to_dense(),
                            chain.terminal_eps, slack=slack, dense_limit=dense_limit)
        report.terminal_measured = cert.tightest_eps
        report.pass_terminal = cert.passed
        if not cert.passed:
            report.violations.append(
                f"terminal: measured {cert.tightest_eps:.3e} exceeds recorded "
                f"{chain.terminal_eps:.3e}")

    report.budget_total = chain.budget_total
    report.pass_budget = report.budget_total <= chain.budget + 1e-12
    if not report.pass_budget:
        report.violations.append(
            f"budget {report.budget_total:.4f} exceeds {chain.budget:.4f}")

    eps_ok = all(e <= 1.0 / 9.0 + slack for e in chain.eps_values)
    if strict and d >= 1 and eps_ok and chain.dim <= dense_limit:
        inv_sqrt = 1.0 / np.sqrt(last.d.values)
        lam = (sla.eigvalsh(inv_sqrt[:, None] * last.a.to_dense() * inv_sqrt)
               if last.a.nnz else np.zeros(1))
        report.window_checked = True
        report.window_lam_min = float(lam[0])
        report.window_lam_max = float(lam[-1])
        report.pass_window = (lam[0] >= _WINDOW_LOW - _WINDOW_SLACK
                              and lam[-1] <= STOP_LAMBDA + _WINDOW_SLACK)
        if not report.pass_window:
            report.violations.append(
                f"terminal window violated: [{lam[0]:.6g}, {lam[-1]:.6g}]")


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

_FORMAT = "invchain-chain-1"


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def chain_to_payload(chain: InverseChain) -> dict:
    """Serialize to the wire/disk form: per-level matrix texts + manifest."""
    levels = [{"d": mmio.matrix_to_text(lvl.d), "a": mmio.matrix_to_text(lvl.a)}
              for lvl in chain.levels]
    return {"manifest": manifest_text(chain, levels), "levels": levels}


def manifest_text(chain: InverseChain, level_texts: list | None = None,
                  extra: dict | None = None) -> str:
    if level_texts is None:
        level_texts = [{"d": mmio.matrix_to_text(lvl.d), "a": mmio.matrix_to_text(lvl.a)}
                       for lvl in chain.levels]
    lines = [
        f"format={_FORMAT}",
        f"n={chain.dim}",
        f"depth={chain.depth}",
        f"seed={chain.seed}",
        f"kappa_hat={chain.kappa_hat!r}",
        f"budget={chain.budget!r}",
        f"terminal_eps={chain.terminal_eps!r}",
    ]
    for key in sorted(extra or {}):
        lines.append(f"{key}={extra[key]}")
    for i, lvl in enumerate(chain.levels):
        lines.append(f"level_{i}_nnz={lvl.a.nnz}")
        if i < chain.depth:
            lines.append(f"level_{i}_eps={lvl.eps!r}")
        lines.append(f"level_{i}_sha_d={_sha(level_texts[i]['d'])}")
        lines.append(f"level_{i}_sha_a={_sha(level_texts[i]['a'])}")
    return "\n".join(lines) + "\n"


def chain_from_payload(payload: dict) -> InverseChain:
    manifest = dict(
        line.split("=", 1) for line in payload["manifest"].splitlines() if "=" in line)
    if manifest.get("format") != _FORMAT:
        raise ValueError(f"unknown chain format {manifest.get('format')!r}")
    depth = int(manifest["depth"])
    levels = []
    for i, blob in enumerate(payload["levels"]):
        for part in ("d", "a"):
            want = manifest.get(f"level_{i}_sha_{part}")
            if want and _sha(blob[part]) != want:
                raise ValueError(f"level {i} {part}-matrix does not match its digest")
        dm = mmio.matrix_from_text(blob["d"])
        off = dm.offdiagonal()
        if off.nnz:
            raise ValueError(f"level {i} D-file is not diagonal")
        a = mmio.matrix_from_text(blob["a"])
        eps = float(manifest.get(f"level_{i}_eps", 0.0)) if i < depth else 0.0
        levels.append(ChainLevel(DiagMatrix(dm.diagonal()), a, eps))
    if len(levels) != depth + 1:
        raise ValueError(f"expected {depth + 1} levels, got {len(levels)}")
    return InverseChain(
        levels=levels,
        terminal_eps=float(manifest["terminal_eps"]),
        seed=int(manifest["seed"]),
        kappa_hat=float(manifest["kappa_hat"]),
        budget=float(manifest["budget"]),
    )


def chain_to_dir(chain: InverseChain, directory) -> None:
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    payload = chain_to_payload(chain)
    for i, blob in enumerate(payload["levels"]):
        (path / f"level_{i:02d}.D.mtx").write_text(blob["d"])
        (path / f"level_{i:02d}.A.mtx").write_text(blob["a"])
    (path / "manifest.txt").write_text(payload["manifest"])


def chain_from_dir(directory) -> InverseChain:
    path = Path(directory)
    manifest = (path / "manifest.txt").read_text()
    depth = int(dict(l.split("=", 1) for l in manifest.splitlines() if "=" in l)["depth"])
    levels = []
    for i in range(depth + 1):
        levels.append({
            "d": (path / f"level_{i:02d}.D.mtx").read_text(),
            "a": (path / f"level_{i:02d}.A.mtx").read_text(),
        })
    return chain_from_payload({"manifest": manifest, "levels": levels})


def chain_stats_text(chain: InverseChain) -> str:
    """Per-level statistics: n, nnz, eps, extreme diagonal ratios."""
    lines = [
        f"n={chain.dim} depth={chain.depth} kappa_hat={chain.kappa_hat:.6g} "
        f"seed={chain.seed} budget_total={chain.budget_total:.6g} "
        f"terminal_eps={chain.terminal_eps:.6g} total_nnz={chain.total_nnz}"
    ]
    for i, lvl in enumerate(chain.levels):
        if i == 0:
            ratio = "-"
        else:
            r = lvl.d.values / chain.levels[i - 1].d.values
            ratio = f"[{r.min():.6g}, {r.max():.6g}]"
        eps = f"{lvl.eps:.6g}" if i < chain.depth else "-"
        lines.append(f"level {i}: nnz={lvl.a.nnz} eps={eps} diag_ratio={ratio}")
    return "\n".join(lines) + "\n"
