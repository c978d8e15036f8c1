"""Command-line entry points.

Every subcommand takes an experiment config (TOML or JSON), applies the
common overrides (--seed, --paths, --out-dir, --format, --threads) and writes
deterministic files: for a fixed (config, seed) the emitted bytes do not
depend on the thread count.

Exit codes: 0 success, 1 failed verification verdict, 2 usage/config error,
3 numerical failure.
"""

from __future__ import annotations

import os
import sys
from dataclasses import replace
from functools import wraps

import click
import numpy as np

from . import harness, reports
from .config import parse_config
from .errors import ConfigError, SmlevyError
from .impulse import validate_family
from .limits import LevyCharacteristics, LimitConfig, simulate_limit_ensemble
from .prelimit import PrelimitConfig, _stats_from_samples, ensemble
from .switching import ergodic_summary, validate_model

__all__ = ["main"]


def common_options(f):
    opts = [
        click.option("--seed", type=int, default=None,
                     help="Override run.master_seed."),
        click.option("--paths", type=int, default=None,
                     help="Override run.n_paths."),
        click.option("--out-dir", type=click.Path(), default=None,
                     help="Override run.out_dir."),
        click.option("--format", "fmt", type=click.Choice(["csv", "json"]),
                     default=None, help="Override run.format."),
        click.option("--threads", type=int, default=None,
                     help="Worker threads (never affects output bytes)."),
    ]
    for opt in reversed(opts):
        f = opt(f)
    return f


def _load(config_path, seed, paths, out_dir, fmt, threads):
    cfg = parse_config(config_path)
    kw = {}
    if seed is not None:
        kw["master_seed"] = seed
    if paths is not None:
        kw["n_paths"] = paths
    if out_dir is not None:
        kw["out_dir"] = str(out_dir)
    if fmt is not None:
        kw["format"] = fmt
    if threads is not None:
        kw["threads"] = threads
    run = replace(cfg.run, **kw) if kw else cfg.run
    cfg = replace(cfg, run=run)
    validate_model(cfg.model)
    summary = ergodic_summary(cfg.model)
    validate_family(cfg.family, summary.rho, run.balance_grid())
    os.makedirs(run.out_dir, exist_ok=True)
    return cfg, summary


def guarded(f):
    """Map package errors onto the documented exit codes."""

    @wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"error: config: {exc}", err=True)
            sys.exit(2)
        except SmlevyError as exc:
            click.echo(f"error: numerical: {exc}", err=True)
            sys.exit(3)

    return wrapper


@click.group()
def main():
    """Semi-Markov impulse-process simulation and limit verification."""


@main.command()
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@common_options
@guarded
def analyze(config, seed, paths, out_dir, fmt, threads):
    """Ergodic summary and limit-characteristics tables."""
    cfg, summary = _load(config, seed, paths, out_dir, fmt, threads)
    run = cfg.run
    chars = LevyCharacteristics(cfg.family, summary, reading=run.sigma_reading,
                                u_interval=run.u_interval)
    p1 = reports.write_ergodic_summary(summary, cfg.model.states,
                                       os.path.join(run.out_dir, "ergodic_summary.txt"))
    p2 = reports.write_characteristics(
        chars, run.balance_grid(),
        os.path.join(run.out_dir, f"characteristics.{run.format}"), run.format)
    click.echo(p1)
    click.echo(p2)


@main.command("simulate-prelimit")
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@click.option("--eps", type=float, default=None,
              help="Series parameter (default: smallest in run.eps_list).")
@common_options
@guarded
def simulate_prelimit_cmd(config, eps, seed, paths, out_dir, fmt, threads):
    """Scaled-process ensemble and statistics tables."""
    cfg, summary = _load(config, seed, paths, out_dir, fmt, threads)
    run = cfg.run
    eps = eps if eps is not None else min(run.eps_list)
    pcfg = PrelimitConfig(eps=eps, horizon=run.horizon, u0=run.u0,
                          master_seed=run.master_seed, init_dist=run.init_dist)
    t_grid = run.time_grid()
    samples, stats = ensemble(cfg.model, cfg.family, pcfg, run.n_paths, t_grid,
                              threads=run.threads, summary=summary)
    p1 = reports.write_ensemble_csv(
        samples, t_grid,
        os.path.join(run.out_dir, f"prelimit_ensemble.{run.format}"), run.format)
    p2 = reports.write_stats_csv(
        stats, os.path.join(run.out_dir, f"prelimit_stats.{run.format}"), run.format)
    click.echo(p1)
    click.echo(p2)


@main.command("simulate-limit")
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@common_options
@guarded
def simulate_limit_cmd(config, seed, paths, out_dir, fmt, threads):
    """Limit-process ensemble and statistics tables."""
    cfg, summary = _load(config, seed, paths, out_dir, fmt, threads)
    run = cfg.run
    chars = LevyCharacteristics(cfg.family, summary, reading=run.sigma_reading,
                                u_interval=run.u_interval)
    t_grid = run.time_grid()
    samples, counts = simulate_limit_ensemble(
        chars, LimitConfig(T=run.horizon, u0=run.u0), run.n_paths,
        run.master_seed, t_grid, threads=run.threads)
    sup2 = np.max(np.sum(samples ** 2, axis=2), axis=1)
    stats = _stats_from_samples(0.0, t_grid, samples, sup2)
    p1 = reports.write_ensemble_csv(
        samples, t_grid,
        os.path.join(run.out_dir, f"limit_ensemble.{run.format}"), run.format)
    p2 = reports.write_stats_csv(
        stats, os.path.join(run.out_dir, f"limit_stats.{run.format}"), run.format)
    click.echo(p1)
    click.echo(p2)
    click.echo(f"mean jumps per path: {counts.mean():.6g}")


@main.command()
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@common_options
@guarded
def gencheck(config, seed, paths, out_dir, fmt, threads):
    """Generator-consistency report; exit 1 when the check fails."""
    cfg, summary = _load(config, seed, paths, out_dir, fmt, threads)
    run = cfg.run
    chars = LevyCharacteristics(cfg.family, summary, reading=run.sigma_reading,
                                u_interval=run.u_interval)
    phis = harness.reference_test_functions(
        *run.taper(), u0=float(np.asarray(run.u0).reshape(-1)[0]))
    rep = harness.generator_consistency(
        cfg.model, cfg.family, chars, phis, run.u0, run.gencheck_eps,
        run.gencheck_paths, master_seed=run.master_seed, threads=run.threads,
        summary=summary)
    for p in reports.emit_report(rep, run.out_dir, run.format):
        click.echo(p)
    click.echo(rep.summary())
    if not rep.passed:
        sys.exit(1)


@main.command()
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@common_options
@guarded
def converge(config, seed, paths, out_dir, fmt, threads):
    """Weak-convergence distance report; exit 1 when the verdict fails."""
    cfg, summary = _load(config, seed, paths, out_dir, fmt, threads)
    run = cfg.run
    rep = harness.convergence_experiment(
        cfg.model, cfg.family, run.eps_list, run.horizon, run.time_grid(),
        run.n_paths, master_seed=run.master_seed, threads=run.threads,
        reading=run.sigma_reading, threshold=run.w1_threshold, u0=run.u0,
        u_interval=run.u_interval)
    for p in reports.emit_report(rep, run.out_dir, run.format):
        click.echo(p)
    click.echo(rep.summary())
    if not rep.passed:
        sys.exit(1)


@main.command()
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@common_options
@guarded
def suite(config, seed, paths, out_dir, fmt, threads):
    """Full verification battery; exit 1 on any failed criterion."""
    cfg, summary = _load(config, seed, paths, out_dir, fmt, threads)
    run = cfg.run
    result = harness.full_suite(cfg.model, cfg.family, run, threads=run.threads)
    for p in reports.emit_report(result, run.out_dir, run.format):
        click.echo(p)
    click.echo(result.summary())
    if not result.passed:
        sys.exit(1)


if __name__ == "__main__":
    main()
