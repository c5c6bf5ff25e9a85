"""Command-line entry point: ``cscn run | sweep | converge | oracle``.

Every command writes CSV files plus ``manifest.txt`` (config hash, seed,
package versions) and the effective ``config.yaml`` into ``--out-dir``.
"""
from __future__ import annotations

import logging
import math
from pathlib import Path

import click
import numpy as np

from .baselines import uniform_caching
from .cache import write_allocation
from .delivery import TRACE_COLUMNS, penalty_cccp, random_beams
from .harness import (SCHEMES, SWEEP_VARS, Timeline, brute_force_oracle, run_experiment, save_config,
                      tiny_instances, write_block, write_csv, write_manifest, write_sweep, _fmt)
from .model import ConfigError, SystemConfig, load_config, validate_config
from .scenario import Purpose, Scenario, stream


def _config(path: str | None, profile: str, seed: int | None) -> SystemConfig:
    try:
        cfg = load_config(path) if path else validate_config(profile=profile)
    except (ConfigError, OSError) as exc:
        raise click.UsageError(str(exc)) from exc
    return cfg.replace(seed=seed) if seed is not None else cfg


def _out(out_dir: str, config: SystemConfig, **extra) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(config, out / "config.yaml")
    write_manifest(config, out / "manifest.txt", extra)
    return out


def _csv_list(text: str, cast=str) -> list:
    return [cast(s.strip()) for s in text.split(",") if s.strip()]


config_opt = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                          help="YAML config (flat keys, optional 'profile' base).")
profile_opt = click.option("--profile", type=click.Choice(["desk", "paper"]), default="desk", show_default=True,
                           help="Built-in profile used when --config is absent.")
seed_opt = click.option("--seed", type=int, default=None, help="Override the config seed.")
out_opt = click.option("--out-dir", type=click.Path(file_okay=False), default="out", show_default=True)


@click.group()
@click.option("-v", "--verbose", count=True, help="-v for info, -vv for debug logging.")
def main(verbose: int) -> None:
    """Cache allocation and multicast delivery experiments for cloud small-cell networks."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@config_opt
@profile_opt
@seed_opt
@out_opt
@click.option("--scheme", type=click.Choice(SCHEMES), default="proposed", show_default=True)
@click.option("--block", type=click.IntRange(min=0), default=1, show_default=True,
              help="Block index; the proposed scheme learns from block-1.")
def run(config_path, profile, seed, out_dir, scheme, block):
    """Run one block under one caching scheme."""
    cfg = _config(config_path, profile, seed)
    out = _out(out_dir, cfg, command="run", scheme=scheme, block=block)
    tl = Timeline(cfg)
    report = tl.run_block(scheme, block)
    write_block(report, out / f"block_{scheme}_{block}.csv")
    if scheme != "LRU":
        write_allocation(report.allocations[0], out / f"cache_{scheme}_{block}.csv")
    click.echo(f"{scheme} block {block}: mean power {report.mean_power:.6g} W, "
               f"{report.infeasible} infeasible slot(s)")


@main.command()
@config_opt
@profile_opt
@seed_opt
@out_opt
@click.option("--var", type=click.Choice(sorted(SWEEP_VARS)), required=True)
@click.option("--values", required=True, help="Comma-separated values, e.g. 0,0.2,0.4.")
@click.option("--schemes", default=",".join(SCHEMES), show_default=True, help="Comma-separated schemes.")
@click.option("--reps", type=click.IntRange(min=1), default=1, show_default=True,
              help="Repetitions; repetition r uses seed + r.")
@click.option("--blocks", type=click.IntRange(min=1), default=1, show_default=True,
              help="Blocks evaluated per repetition.")
def sweep(config_path, profile, seed, out_dir, var, values, schemes, reps, blocks):
    """Sweep mu, I or K and tabulate mean slot power per scheme."""
    cfg = _config(config_path, profile, seed)
    vals = _csv_list(values, float)
    names = _csv_list(schemes)
    bad = [s for s in names if s not in SCHEMES]
    if bad:
        raise click.UsageError(f"unknown scheme(s) {bad}; choose from {list(SCHEMES)}")
    out = _out(out_dir, cfg, command="sweep", var=var, values=values, schemes=",".join(names), reps=reps,
               blocks=blocks)
    exp = run_experiment(cfg, var, vals, names, repetitions=reps, blocks=blocks)
    write_sweep(exp, out / f"sweep_{var}.csv")
    for r in exp.rows:
        flag = f"  FAILED: {r.failed}" if r.failed else ""
        click.echo(f"{var}={_fmt(r.value)} {r.scheme}: {r.mean_power_w:.6g} W "
                   f"(se {r.stderr_w:.3g}, {r.infeasible_slots} infeasible){flag}")


@main.command()
@config_opt
@profile_opt
@seed_opt
@out_opt
@click.option("--block", type=click.IntRange(min=0), default=0, show_default=True)
@click.option("--slot", type=click.IntRange(min=0), default=0, show_default=True)
@click.option("--inits", type=click.IntRange(min=1), default=3, show_default=True,
              help="Random beamformer initializations.")
def converge(config_path, profile, seed, out_dir, block, slot, inits):
    """Penalty-CCCP objective traces of one slot under the uniform cache."""
    cfg = _config(config_path, profile, seed)
    if slot >= cfg.block_length:
        raise click.UsageError(f"--slot must be < block length {cfg.block_length}")
    out = _out(out_dir, cfg, command="converge", block=block, slot=slot, inits=inits)
    sc = Scenario(cfg)
    requests = sc.requests(block, slot)
    H = sc.channels(block).slot(slot)
    L = uniform_caching(cfg).fractions
    for i in range(inits):
        rng = stream(cfg.seed, Purpose.BEAM_INIT, block, slot, i)
        sol = penalty_cccp(L, requests, H, cfg, V_init=random_beams(requests, cfg, rng))
        write_csv(([r.iteration, _fmt(r.objective), _fmt(r.penalty), _fmt(r.omega_max)] for r in sol.trace),
                  TRACE_COLUMNS, out / f"trace_init{i}.csv")
        click.echo(f"init {i}: {sol.status} after {sol.iterations} iterations, "
                   f"power {sol.power.total:.6g} W")


@main.command()
@config_opt
@profile_opt
@seed_opt
@out_opt
@click.option("--count", type=click.IntRange(min=1), default=50, show_default=True)
def oracle(config_path, profile, seed, out_dir, count):
    """Compare polished penalty CCCP with exhaustive search on tiny unicast instances."""
    cfg = _config(config_path, profile, seed)
    out = _out(out_dir, cfg, command="oracle", count=count)
    rows, ratios = [], []
    for i, (tcfg, s) in enumerate(tiny_instances(cfg, count, cfg.seed)):
        L = uniform_caching(tcfg).fractions
        best = brute_force_oracle(s.requests, s.channels, L, tcfg)
        rng = stream(tcfg.seed, Purpose.BEAM_INIT, s.block, s.index)
        sol = penalty_cccp(L, s.requests, s.channels, tcfg, rng)
        got = sol.power.total if sol.feasible else math.inf
        ratio = got / best.power if best.feasible and best.power > 0 else math.nan
        ratios.append(ratio)
        rows.append((i, tcfg.seed, _fmt(best.power), _fmt(got), _fmt(ratio)))
    write_csv(rows, ("instance", "seed", "oracle_w", "cccp_w", "ratio"), out / "oracle.csv")
    r = np.asarray(ratios)
    r = r[np.isfinite(r)]
    if r.size:
        click.echo(f"{r.size}/{count} comparable: median ratio {np.median(r):.4f}, "
                   f"90th percentile {np.quantile(r, 0.9):.4f}, max {r.max():.4f}")
    else:
        click.echo("no comparable instances")


if __name__ == "__main__":
    main()
