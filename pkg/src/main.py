"""CLI entry point for esn_ensembles.

Commands:
    run   : Fit ESN ensembles and run the online combination schemes
    bounds: Monte Carlo regret against the closed-form bounds
    synth : Write a synthetic mixed-frequency data bundle
"""

from __future__ import annotations

import sys
from pathlib import Path
from typing import NoReturn

import click
from loguru import logger

from src.config import load_config
from src.errors import EXIT_UNEXPECTED, ConfigError, EnsembleError

LOG_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level:<8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan> — <level>{message}</level>"
)


def _setup_logging(log_level: str) -> None:
    """Configure loguru logger with the given level.

    Args:
        log_level: Logging level string (DEBUG, INFO, WARNING, ERROR).
    """
    logger.remove()
    logger.add(sys.stderr, level=log_level.upper(), format=LOG_FORMAT)


def _exit_with(exc: Exception, command: str) -> NoReturn:
    """Log a failed command and exit with the status of its error family."""
    if isinstance(exc, EnsembleError):
        logger.error("{} failed: {}", command, exc)
        sys.exit(exc.exit_code)
    logger.exception("{} failed unexpectedly: {}", command, exc)
    sys.exit(EXIT_UNEXPECTED)


seed_option = click.option("--seed", default=None, type=int, help="Master seed (overrides ESN_SEED and the config).")
threads_option = click.option("--threads", default=None, type=click.IntRange(min=1), help="Worker pool size.")
out_dir_option = click.option(
    "--out-dir", default=None, type=click.Path(file_okay=False), help="Output directory (overrides ESN_OUTPUT_DIR)."
)


@click.group()
@click.option(
    "--log-level",
    default=None,
    help="Override log level (DEBUG, INFO, WARNING, ERROR).",
)
@click.pass_context
def cli(ctx: click.Context, log_level: str | None) -> None:
    """esn_ensembles: online combination of echo state network ensembles."""
    ctx.ensure_object(dict)
    try:
        config = load_config()
    except ConfigError as exc:
        _setup_logging(log_level or "INFO")
        _exit_with(exc, "configuration")

    _setup_logging(log_level or config.log_level)
    ctx.obj["config"] = config


@cli.command()
@click.argument("config_path", type=click.Path(dir_okay=False))
@seed_option
@threads_option
@out_dir_option
@click.pass_context
def run(ctx: click.Context, config_path: str, seed: int | None, threads: int | None, out_dir: str | None) -> None:
    """Fit ensembles from CONFIG_PATH and write MSFE, ECDF, weight and regret tables."""
    from src.runner.experiment import cmd_run

    config = ctx.obj["config"]
    try:
        outcome = cmd_run(config_path, config, out_dir=out_dir, seed=seed, threads=threads)
    except Exception as exc:
        _exit_with(exc, "run")
    logger.info("Run {} complete: {}", outcome.run_id, outcome.out_dir)


@cli.command()
@click.argument("config_path", type=click.Path(dir_okay=False))
@seed_option
@threads_option
@out_dir_option
@click.pass_context
def bounds(ctx: click.Context, config_path: str, seed: int | None, threads: int | None, out_dir: str | None) -> None:
    """Validate empirical regret against the bounds configured in CONFIG_PATH."""
    from src.runner.bounds_lab import cmd_bounds

    config = ctx.obj["config"]
    try:
        outcome = cmd_bounds(config_path, config, out_dir=out_dir, seed=seed, threads=threads)
    except Exception as exc:
        _exit_with(exc, "bounds")
    logger.info("Bounds run {} complete: {} rows passed", outcome.run_id, len(outcome.rows))


@cli.command()
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--seed", default=0, show_default=True, type=int, help="Seed of the synthetic draw.")
@click.option("--quarters", default=80, show_default=True, type=int, help="Number of quarters.")
@click.option("--monthly", default=3, show_default=True, type=int, help="Number of monthly indicators.")
@click.option("--daily", default=1, show_default=True, type=int, help="Number of daily price series.")
def synth(out_dir: str, seed: int, quarters: int, monthly: int, daily: int) -> None:
    """Write a synthetic regime-switching data bundle (CSV files and manifest) to OUT_DIR."""
    from src.dataio.synthetic import SyntheticDesign, write_bundle

    try:
        design = SyntheticDesign(n_quarters=quarters, n_monthly=monthly, n_daily=daily)
        manifest = write_bundle(Path(out_dir), design, seed)
    except Exception as exc:
        _exit_with(exc, "synth")
    logger.info("Manifest written: {}", manifest)


def main() -> None:
    """Entry point for the CLI."""
    cli()


if __name__ == "__main__":
    main()
