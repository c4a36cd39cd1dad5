"""Command line entry point (``specrisk``).

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from .baselines import oscillation_demo
from .harness.config import ConfigError, load_config
from .harness.data import DataError
from .harness.experiment import (build_model, get_reference, record_config_failure,
                                 run_experiment)
from .harness.plots import emit_plots
from .sorel import practical_schedule, theoretical_schedule, validate_condition1

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _fail(code, message):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load(path, **kw):
    try:
        return load_config(path, **kw)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Spectral risk minimisation experiments."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.argument("config", type=click.Path(dir_okay=False))
@click.option("--force", is_flag=True, help="Recompute runs even if cached.")
def run(config, force):
    """Run every method and seed in CONFIG, writing traces and a manifest."""
    try:
        cfg = load_config(config)
    except ConfigError as exc:
        # still leave a manifest behind when the output folder is known
        try:
            cfg_loose = load_config(config, check_files=False)
            record_config_failure(cfg_loose.output_dir, str(exc), str(config))
        except ConfigError:
            pass
        _fail(EXIT_CONFIG, str(exc))
    manifest = run_experiment(cfg, force=force)
    runs = manifest["runs"]
    hits = sum(1 for e in runs.values() if e.get("cache") == "hit")
    click.echo(f"{len(runs)} runs ({hits} cached, {len(manifest['failed'])} failed) -> {cfg.output_dir}")
    for rid in manifest["failed"]:
        click.echo(f"  failed {rid}: {runs[rid].get('error')}", err=True)
    sys.exit(EXIT_RUNTIME if manifest["failed"] else EXIT_OK)


@main.command()
@click.argument("trace_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--x", "x_axis", type=click.Choice(["passes", "seconds"]), default="passes",
              show_default=True)
@click.option("--floor", type=float, default=1e-12, show_default=True,
              help="Lowest suboptimality drawn on the log axis.")
def plot(trace_dir, x_axis, floor):
    """Write a long-format table and one SVG chart per (dataset, spectrum)."""
    try:
        paths = emit_plots(trace_dir, x_axis=x_axis, floor=floor)
    except ValueError as exc:
        _fail(EXIT_RUNTIME, str(exc))
    for p in paths:
        click.echo(str(p))


@main.command()
@click.argument("config", type=click.Path(dir_okay=False))
def reference(config):
    """Compute (or load) the reference solution for CONFIG's problem."""
    cfg = _load(config)
    try:
        ref = get_reference(cfg)
    except (DataError, ValueError, OSError) as exc:
        _fail(EXIT_RUNTIME, str(exc))
    click.echo(json.dumps({k: ref[k] for k in ("objective", "gap", "iterations", "converged")},
                          sort_keys=True))
    sys.exit(EXIT_OK if ref["converged"] else EXIT_RUNTIME)


@main.command("validate-schedule")
@click.argument("config", type=click.Path(dir_okay=False))
@click.option("--horizon", type=int, required=True, help="Largest outer index checked.")
def validate_schedule(config, horizon):
    """Check the parameter inequalities for the [sorel] schedule of CONFIG.

    Exits 2 if any inequality fails.
    """
    cfg = _load(config)
    if horizon < 1:
        _fail(EXIT_CONFIG, "--horizon must be at least 1")
    params = cfg.methods.get("sorel", [None])[0]
    if params is None:
        _fail(EXIT_CONFIG, "config has no sorel method")
    try:
        model = build_model(cfg)
    except (DataError, ValueError, OSError) as exc:
        _fail(EXIT_RUNTIME, str(exc))
    if params["mode"] == "theoretical":
        sched = theoretical_schedule(model.reg_mu, model.smoothness_L, model.lipschitz_G,
                                     c_T=params["c_T"], m_rule=params["m_rule"])
    else:
        sched = practical_schedule(model.n, params["C"], params["alpha"],
                                   batch_size=params["batch_size"], G=model.lipschitz_G)
    report = validate_condition1(sched, model.lipschitz_G, model.reg_mu, horizon)
    click.echo(f"{sched.mode} schedule, G={model.lipschitz_G:.4g}, mu={model.reg_mu:.4g}, k=0..{horizon}")
    for line in report.lines():
        click.echo("  " + line)
    sys.exit(EXIT_OK if report.all_passed else EXIT_RUNTIME)


@main.command("demo-oscillation")
@click.option("--alpha", type=float, default=1.0, show_default=True)
@click.option("--w0", type=float, default=0.5, show_default=True)
@click.option("--T", "T", type=int, default=500, show_default=True, help="Inner steps.")
@click.option("--outer", type=int, default=10, show_default=True)
def demo_oscillation(alpha, w0, T, outer):
    """Print the outer iterates of the unstabilised alternation."""
    try:
        ws = oscillation_demo(alpha, w0, T=T, outer=outer)
    except ValueError as exc:
        _fail(EXIT_CONFIG, str(exc))
    for k, w in enumerate(ws):
        click.echo(f"{k}\t{w:+.12f}")


if __name__ == "__main__":
    main()
