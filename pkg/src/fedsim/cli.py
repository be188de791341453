"""Command line interface: run scenarios, print reports, check calibration.

Exit codes: 0 success, 2 config error, 3 calibration check failure.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .calibration import ScenarioCache, packaged_scenario, run_checks
from .config import SEED_ENV_VAR, ScenarioConfig, load_config
from .errors import ConfigError
from .report import export_samples, export_summary, parse_summary
from .runner import run_scenario
from .stats import LatencyStats

EXIT_CONFIG_ERROR = 2
EXIT_CHECK_FAILURE = 3


def _load_scenario(ref: str, seed_flag: int | None) -> ScenarioConfig:
    """Resolve a path or a packaged scenario name; apply seed precedence
    (--seed flag, then FEDSIM_SEED, then the config file)."""
    if Path(ref).exists():
        config = load_config(ref, apply_env=True)
    else:
        config = packaged_scenario(ref, apply_env=True)
    if seed_flag is not None:
        config.seed = seed_flag
    return config


@click.group()
def main() -> None:
    """Deterministic multi-cluster federation simulator."""


@main.command(name="run")
@click.option("--scenario", required=True,
              help="Path to a scenario file, or a packaged name (sce1..sce5, xr-target).")
@click.option("--seed", type=int, default=None,
              help=f"Override the config seed (beats {SEED_ENV_VAR}).")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
              help="Directory for report.json and samples.csv.")
@click.option("--repeat", type=int, default=1, show_default=True,
              help="Run this many consecutive seeds and pool the results.")
def run_cmd(scenario: str, seed: int | None, out_dir: str, repeat: int) -> None:
    """Execute one scenario and export its report and samples table."""
    try:
        config = _load_scenario(scenario, seed)
    except (ConfigError, FileNotFoundError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = [config.seed + i for i in range(max(repeat, 1))]
    pooled_ms: list[float] = []
    per_run = []
    for run_seed in seeds:
        config.seed = run_seed
        result = run_scenario(config)
        target = out if len(seeds) == 1 else out / f"seed-{run_seed}"
        target.mkdir(parents=True, exist_ok=True)
        (target / "report.json").write_bytes(export_summary(result.report))
        (target / "samples.csv").write_bytes(export_samples(result.samples))
        lat = result.report.latency
        click.echo(f"{config.name} seed={run_seed}: n={lat.n}"
                   + (f" p50={lat.p50_ms:.1f}ms p90={lat.p90_ms:.1f}ms" if lat.n else "")
                   + f" -> {target}")
        pooled_ms.extend(
            s.latency_ms for s in result.samples
            if s.embed_us >= result.warmup_cutoff_us)
        per_run.append({"seed": run_seed, "n": lat.n, "p50_ms": lat.p50_ms,
                        "p90_ms": lat.p90_ms, "stddev_ms": lat.stddev_ms})
    if len(seeds) > 1:
        pooled = LatencyStats.from_samples(pooled_ms)
        doc = {"scenario": config.name, "seeds": seeds,
               "pooled": {"n": pooled.n, "p50_ms": pooled.p50_ms,
                          "p90_ms": pooled.p90_ms, "stddev_ms": pooled.stddev_ms},
               "runs": per_run}
        (out / "pooled.json").write_text(
            json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        click.echo(f"pooled over {len(seeds)} seeds: p50={pooled.p50_ms:.1f}ms "
                   f"p90={pooled.p90_ms:.1f}ms -> {out / 'pooled.json'}")


@main.command(name="report")
@click.option("--in", "in_dir", required=True,
              type=click.Path(exists=True, file_okay=False),
              help="Directory previously written by `fedsim run`.")
def report_cmd(in_dir: str) -> None:
    """Pretty-print exported run reports."""
    paths = sorted(Path(in_dir).rglob("report.json"))
    if not paths:
        click.echo(f"no report.json under {in_dir}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    for path in paths:
        report = parse_summary(path.read_bytes())
        click.echo(f"scenario {report.scenario} (seed {report.seed}, "
                   f"{report.duration_min:g} min)")
        lat = report.latency
        if lat.n:
            click.echo(f"  latency: n={lat.n} p50={lat.p50_ms:.1f}ms "
                       f"p90={lat.p90_ms:.1f}ms stddev={lat.stddev_ms:.1f}ms")
        else:
            click.echo("  latency: no consumed frames")
        if report.cpu.median_pct is not None:
            click.echo(f"  cpu median {report.cpu.median_pct:.1f}%  "
                       f"mem median {report.mem.median_pct:.1f}%")
        click.echo(f"  frames: generated={report.frames.generated} "
                   f"consumed={report.frames.consumed} dropped={report.frames.dropped}")
        for p in report.provisioning:
            click.echo(f"  cluster {p.cluster}: cp ready {p.cp_ready_at_ms / 1000:.1f}s, "
                       f"all ready {p.all_ready_at_ms / 1000:.1f}s")
        verdict = "pass" if report.qos.passed else (
            "no data" if report.qos.no_data else
            f"fail ({report.qos.violations} violations)")
        click.echo(f"  qos @ {report.qos.threshold_ms:g}ms: {verdict}")


@main.command(name="calibrate")
@click.option("--profile", default="paper-v1", show_default=True,
              help="Calibration profile to evaluate.")
@click.option("--check", is_flag=True, help="Exit 3 unless every band holds.")
def calibrate_cmd(profile: str, check: bool) -> None:
    """Rerun the reference experiments and report each calibration band."""
    if profile != "paper-v1":
        click.echo(f"unknown profile {profile!r}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    results = run_checks(ScenarioCache())
    failed = [r for r in results if not r.passed]
    for r in results:
        click.echo(f"[{'PASS' if r.passed else 'FAIL'}] {r.name}: {r.detail}")
    click.echo(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if check and failed:
        sys.exit(EXIT_CHECK_FAILURE)


if __name__ == "__main__":
    main()
