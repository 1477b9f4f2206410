"""Batch command line for the lab.

Exit codes: 0 success, 2 config error, 3 runtime error.
"""

import functools
import json
import logging
from pathlib import Path
import sys

import click
from pydantic import ValidationError

from api.config.experiment import load_config
from api.config.settings import configure_logging
from api.errors import ConfigError, LabError, UnknownProbeError
from api.extract.extract_run_logs import assert_verified
from api.harness.compare import ablation_grid, compare_policies
from api.harness.probes import PROBE_IDS, hypothesis_probe
from api.harness.runner import run_experiment
from api.harness.sweep import frontier_from_runs, frontier_sweep

logger = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def exit_codes(command):
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except (ConfigError, ValidationError, UnknownProbeError) as e:
            click.echo(f"config error: {e}", err=True)
            sys.exit(EXIT_CONFIG)
        except LabError as e:
            click.echo(f"runtime error: {e}", err=True)
            sys.exit(EXIT_RUNTIME)

    return wrapper


def emit_table(frame, out: Path | None) -> None:
    """Tidy CSV to ``out`` or stdout."""
    if out is None:
        click.echo(frame.to_csv(index=False), nl=False)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(out, index=False)
        logger.info(f"Wrote {out}")


config_argument = click.argument("config", type=click.Path(path_type=Path))
out_option = click.option("--out", type=click.Path(path_type=Path), default=None, help="CSV output path.")


@click.group()
@click.option("--log-level", default=None, help="Overrides LAB_LOG_LEVEL.")
def cli(log_level):
    configure_logging(log_level)


@cli.command()
@config_argument
@click.option("--output-dir", type=click.Path(path_type=Path), default=None)
@click.option("--workers", type=int, default=None, help="Overrides LAB_MAX_WORKERS.")
@exit_codes
def run(config, output_dir, workers):
    """Run every seed of CONFIG and write the run directory."""
    cfg = load_config(config)
    summary = run_experiment(cfg, output_dir=output_dir, max_workers=workers)
    click.echo(f"{summary.name} ({summary.policy}) mean J {summary.mean_J:.6f} config {summary.config_hash}")


@cli.command()
@config_argument
@click.option("--policy", "policies", multiple=True, required=True, help="adaptive or a schedule such as OAD.")
@click.option("--baseline", default=None)
@click.option("--output-dir", type=click.Path(path_type=Path), default=None)
@out_option
@exit_codes
def compare(config, policies, baseline, output_dir, out):
    """Paired comparison of policies on identical seeds and caps."""
    cfg = load_config(config)
    report = compare_policies(cfg, list(policies), baseline=baseline, output_dir=output_dir, write=output_dir is not None)
    emit_table(report.frame(), out)


@cli.command()
@config_argument
@click.option("--scale", "scales", multiple=True, type=float, help="Budget scale; repeat for each level.")
@click.option("--policy", "policies", multiple=True)
@out_option
@exit_codes
def sweep(config, scales, policies, out):
    """Run policies across budget levels and report frontier distances."""
    cfg = load_config(config)
    result = frontier_sweep(cfg, list(scales) or None, list(policies) or None)
    emit_table(result.frame(), out)


@cli.command()
@config_argument
@click.argument("probe_id", type=click.Choice(PROBE_IDS, case_sensitive=False))
@out_option
@exit_codes
def probe(config, probe_id, out):
    """Run one hypothesis probe; prints the report as JSON."""
    cfg = load_config(config)
    report = hypothesis_probe(cfg, probe_id)
    click.echo(json.dumps(report.model_dump(mode="json"), indent=2, sort_keys=True, default=str))
    if out is not None:
        emit_table(report.frame(), out)


@cli.command()
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@exit_codes
def verify(run_dir):
    """Recompute RUN_DIR's summary from its step logs."""
    assert_verified(run_dir)
    click.echo(f"{run_dir}: summary matches the step logs")


@cli.command()
@click.argument("run_dirs", nargs=-1, required=True, type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--normalization", type=click.Choice(["minmax", "none"]), default="minmax")
@out_option
@exit_codes
def frontier(run_dirs, normalization, out):
    """Frontier over existing run directories."""
    result = frontier_from_runs(list(run_dirs), normalization)
    emit_table(result.frame(), out)


@cli.command()
@config_argument
@out_option
@exit_codes
def ablate(config, out):
    """Tight vs loose bottlenecks, with and without the deliberation penalty."""
    cfg = load_config(config)
    emit_table(ablation_grid(cfg), out)


if __name__ == "__main__":
    cli()
