"""Batch front door: every command is a thin client of the service.

Exit codes: 0 on success, 2 on validation failure, 3 on non-convergence.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .client import ServiceClient, ServiceError

EXIT_VALIDATION = 2
EXIT_NO_CONVERGENCE = 3


@click.group()
@click.option("--url", default=None, envvar="INVCHAIN_URL",
              help="Base URL of a running service; in-process when omitted.")
@click.pass_context
def main(ctx, url):
    """Approximate inverse chain solver for SDD linear systems."""
    ctx.obj = {"url": url}


def _client(ctx) -> ServiceClient:
    return ServiceClient(ctx.obj.get("url"))


def _fail(exc: ServiceError):
    click.echo(f"error: {exc.detail}", err=True)
    code = EXIT_VALIDATION if exc.status_code in (400, 422) else 1
    sys.exit(code)


def _chain_options(seed, workers, budget, eps_level, oversample, general_const,
                   resparsify_threshold, oracle, kappa, early_stop, ground):
    return {
        "seed": seed, "workers": workers, "budget": budget,
        "eps_level": eps_level, "oversample": oversample,
        "general_oversample": general_const,
        "resparsify_threshold": resparsify_threshold, "oracle": oracle,
        "kappa_mode": kappa, "early_stop": early_stop, "ground_index": ground,
    }


_chain_opts = [
    click.option("--seed", type=int, default=0, show_default=True),
    click.option("--threads", "workers", type=int, default=1, show_default=True,
                 help="Worker threads for the parallel kernels."),
    click.option("--budget", type=float, default=2.0, show_default=True,
                 help="Total quality budget of the chain."),
    click.option("--eps-level", type=float, default=None,
                 help="Flat per-level quality override."),
    click.option("--oversample-const", "oversample", type=float, default=4.0,
                 show_default=True, help="Clique sampling constant."),
    click.option("--general-const", type=float, default=4.0, show_default=True,
                 help="Whole-matrix sampling constant."),
    click.option("--resparsify-threshold", type=float, default=16.0,
                 show_default=True,
                 help="Resample a level when nnz exceeds this times n ln n."),
    click.option("--oracle", type=click.Choice(["dense", "none"]), default="dense",
                 show_default=True, help="Effective-resistance oracle."),
    click.option("--kappa", type=click.Choice(["auto", "dense", "formula"]),
                 default="auto", show_default=True,
                 help="Condition-number bound used for planning."),
    click.option("--early-stop/--no-early-stop", default=True, show_default=True),
    click.option("--ground", type=int, default=None,
                 help="Grounding vertex (default: heaviest degree)."),
]


def add_options(options):
    def wrap(fn):
        for opt in reversed(options):
            fn = opt(fn)
        return fn
    return wrap


@main.command()
@click.argument("spec")
@click.option("-o", "--output", type=click.Path(path_type=Path), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--w-low", type=float, default=1.0, show_default=True)
@click.option("--w-high", type=float, default=1.0, show_default=True)
@click.pass_context
def gen(ctx, spec, output, seed, w_low, w_high):
    """Generate a connected weighted graph (Matrix Market adjacency)."""
    try:
        with _client(ctx) as client:
            out = client.post("/gen", {"spec": spec, "seed": seed,
                                       "weight_low": w_low, "weight_high": w_high})
    except ServiceError as exc:
        _fail(exc)
    output.write_text(out["matrix_mm"])
    click.echo(f"wrote {output}: n={out['n']} edges={out['edges']} "
               f"seed={out['seed']} config_hash={out['config_hash']}")


@main.command("build-chain")
@click.option("-m", "--matrix", type=click.Path(path_type=Path), required=True)
@click.option("--kind", type=click.Choice(["laplacian", "sddm"]),
              default="laplacian", show_default=True)
@click.option("-o", "--output", "chain_dir", type=click.Path(path_type=Path),
              required=True, help="Directory for the chain files and manifest.")
@click.option("--validate", "validate_mode",
              type=click.Choice(["none", "lenient", "strict"]),
              default="lenient", show_default=True)
@add_options(_chain_opts)
@click.pass_context
def build_chain_cmd(ctx, matrix, kind, chain_dir, validate_mode, seed, workers,
                    budget, eps_level, oversample, general_const,
                    resparsify_threshold, oracle, kappa, early_stop, ground):
    """Build an approximate inverse chain and write it to a directory."""
    payload = {
        "matrix_mm": matrix.read_text(), "kind": kind, "include_levels": True,
        "validate_mode": validate_mode,
        "options": _chain_options(seed, workers, budget, eps_level, oversample,
                                  general_const, resparsify_threshold, oracle,
                                  kappa, early_stop, ground),
    }
    try:
        with _client(ctx) as client:
            out = client.post("/build-chain", payload)
    except ServiceError as exc:
        _fail(exc)
    chain_dir.mkdir(parents=True, exist_ok=True)
    for i, blob in enumerate(out["chain"]["levels"]):
        (chain_dir / f"level_{i:02d}.D.mtx").write_text(blob["d"])
        (chain_dir / f"level_{i:02d}.A.mtx").write_text(blob["a"])
    (chain_dir / "manifest.txt").write_text(out["manifest"])
    click.echo(f"chain {out['chain_id']} written to {chain_dir}")
    click.echo(out["stats_text"], nl=False)
    if out["validation_text"] is not None:
        click.echo(out["validation_text"])
        if not out["validation_pass"]:
            sys.exit(EXIT_VALIDATION)


def _read_chain_payload(chain_dir: Path) -> dict:
    manifest = (chain_dir / "manifest.txt").read_text()
    fields = dict(l.split("=", 1) for l in manifest.splitlines() if "=" in l)
    depth = int(fields["depth"])
    levels = [{"d": (chain_dir / f"level_{i:02d}.D.mtx").read_text(),
               "a": (chain_dir / f"level_{i:02d}.A.mtx").read_text()}
              for i in range(depth + 1)]
    return {"manifest": manifest, "levels": levels}


@main.command()
@click.option("-m", "--matrix", type=click.Path(path_type=Path), required=True)
@click.option("--kind", type=click.Choice(["laplacian", "sddm"]),
              default="laplacian", show_default=True)
@click.option("--rhs", type=click.Path(path_type=Path), required=True)
@click.option("--eps", type=float, default=1e-8, show_default=True)
@click.option("--chain", "chain_dir", type=click.Path(path_type=Path), default=None,
              help="Reuse a chain directory built by build-chain.")
@click.option("-o", "--output", type=click.Path(path_type=Path), default=None)
@click.option("--report", "report_path", type=click.Path(path_type=Path), default=None)
@add_options(_chain_opts)
@click.pass_context
def solve(ctx, matrix, kind, rhs, eps, chain_dir, output, report_path, seed,
          workers, budget, eps_level, oversample, general_const,
          resparsify_threshold, oracle, kappa, early_stop, ground):
    """Solve a system to the requested M-norm accuracy."""
    payload = {
        "matrix_mm": matrix.read_text(), "kind": kind,
        "rhs_text": rhs.read_text(), "eps": eps, "seed": seed,
        "workers": workers, "ground_index": ground,
        "options": _chain_options(seed, workers, budget, eps_level, oversample,
                                  general_const, resparsify_threshold, oracle,
                                  kappa, early_stop, ground),
    }
    if chain_dir is not None:
        payload["chain"] = _read_chain_payload(Path(chain_dir))
    try:
        with _client(ctx) as client:
            out = client.post("/solve", payload)
    except ServiceError as exc:
        _fail(exc)
    if output is not None:
        Path(output).write_text(out["solution_text"])
        click.echo(f"solution written to {output}")
    else:
        click.echo(out["solution_text"], nl=False)
    if report_path is not None:
        Path(report_path).write_text(out["report_text"])
    click.echo(out["report_text"], err=True, nl=False)
    if not out["converged"]:
        sys.exit(EXIT_NO_CONVERGENCE)


@main.command("verify-chain")
@click.argument("chain_dir", type=click.Path(path_type=Path))
@click.option("--strict/--lenient", "strict", default=None,
              help="Force dense checks on or off (default: by size).")
@click.pass_context
def verify_chain_cmd(ctx, chain_dir, strict):
    """Validate a stored chain against its recorded qualities."""
    payload = {"chain": _read_chain_payload(chain_dir), "strict": strict}
    try:
        with _client(ctx) as client:
            out = client.post("/verify-chain", payload)
    except ServiceError as exc:
        _fail(exc)
    click.echo(out["report_text"])
    if not out["all_pass"]:
        sys.exit(EXIT_VALIDATION)


@main.command("verify-approx")
@click.argument("x_matrix", type=click.Path(path_type=Path))
@click.argument("y_matrix", type=click.Path(path_type=Path))
@click.option("--eps", type=float, default=None,
              help="Quality to certify; reports the tightest value if omitted.")
@click.pass_context
def verify_approx_cmd(ctx, x_matrix, y_matrix, eps):
    """Certify the two-sided spectral approximation between two matrices."""
    payload = {"x_mm": x_matrix.read_text(), "y_mm": y_matrix.read_text(), "eps": eps}
    try:
        with _client(ctx) as client:
            out = client.post("/verify-approx", payload)
    except ServiceError as exc:
        _fail(exc)
    click.echo(f"generalized eigenvalue range: [{out['lam_min']:.9g}, "
               f"{out['lam_max']:.9g}]")
    click.echo(f"tightest eps: {out['tightest_eps']:.9g}")
    if eps is not None:
        click.echo(f"requested eps {eps:g}: {'pass' if out['passed'] else 'fail'}")
        if not out["passed"]:
            sys.exit(EXIT_VALIDATION)


@main.command()
@click.option("--widths", default="8,16,32", show_default=True,
              help="Comma-separated grid widths.")
@click.option("--eps", type=float, default=1e-8, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--threads", "workers", type=int, default=1, show_default=True)
@click.option("--budget", type=float, default=2.0, show_default=True)
@click.option("--eps-level", type=float, default=None)
@click.option("--oracle", type=click.Choice(["dense", "none"]), default="dense",
              show_default=True)
@click.option("--validate", "validate_chains", is_flag=True, default=False)
@click.option("--report", "report_path", type=click.Path(path_type=Path), default=None)
@click.pass_context
def bench(ctx, widths, eps, seed, workers, budget, eps_level, oracle,
          validate_chains, report_path):
    """Build and solve over a grid ladder; report sizes and timings."""
    payload = {
        "widths": [int(w) for w in widths.split(",") if w.strip()],
        "eps": eps, "seed": seed, "workers": workers, "budget": budget,
        "eps_level": eps_level, "oracle": oracle,
        "validate_chains": validate_chains,
    }
    try:
        with _client(ctx) as client:
            out = client.post("/bench", payload)
    except ServiceError as exc:
        _fail(exc)
    click.echo(out["table_text"])
    if report_path is not None:
        Path(report_path).write_text(out["table_text"] + "\n")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8571, show_default=True)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run("invchain.service.app:app", host=host, port=port)


if __name__ == "__main__":
    main()
