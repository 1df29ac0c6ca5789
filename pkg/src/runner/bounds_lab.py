"""Bounds lab: Monte Carlo regret against the closed-form bounds, written as a report."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import pandas as pd
from loguru import logger
from pydantic import BaseModel, Field, ValidationError, field_validator

from src.bounds.constants import worstcase_hedge_bound
from src.bounds.simulate import NoiseSpec
from src.bounds.validation import (
    DEFAULT_BEST_MEAN,
    DEFAULT_REPLICATIONS,
    DEFAULT_ROUNDS,
    REPORT_COLUMNS,
    GridPoint,
    PathwiseReport,
    SuiteSettings,
    ValidationRow,
    pathwise_checks,
    validate_grid,
)
from src.combiner.schemes import DEFAULT_C0
from src.config import AppConfig
from src.errors import EXIT_UNEXPECTED, EXIT_VALIDATION, ConfigError, EnsembleError, ValidationFailure
from src.runner.archive import (
    RunArchive,
    append_run_event,
    build_run_id,
    finalize_run_archive,
    format_run_metadata,
    initialize_run_archive,
    register_output,
)
from src.runner.experiment import read_config_document, resolve_output_dir
from src.runner.outputs import write_frame

PATHWISE_COLUMNS = ("panels", "rounds", "n_experts", "decreasing_violations", "adahedge_violations", "ftl_violations")
WORSTCASE_COLUMNS = ("K", "horizon", "s_cap", "decreasing", "optimal_constant", "adahedge")


class GridConfig(BaseModel):
    n_experts: List[int] = Field(min_length=1)
    deltas: List[float] = Field(min_length=1)
    mixing_ratios: List[float] = Field(default_factory=lambda: [0.0])

    @field_validator("n_experts")
    @classmethod
    def _enough_experts(cls, value: List[int]) -> List[int]:
        if any(k < 2 for k in value):
            raise ValueError("every K must be >= 2, got {}".format(value))
        return value

    @field_validator("deltas")
    @classmethod
    def _positive_gaps(cls, value: List[float]) -> List[float]:
        bad = [delta for delta in value if not delta > 0.0]
        if bad:
            raise ValueError("sub-optimality gaps must be positive, got {}; the bounds are undefined".format(bad))
        return value

    @field_validator("mixing_ratios")
    @classmethod
    def _ratio_range(cls, value: List[float]) -> List[float]:
        if any(not 0.0 <= ratio < 1.0 for ratio in value):
            raise ValueError("mixing ratios must lie in [0, 1), got {}".format(value))
        return value

    def points(self) -> List[GridPoint]:
        return [
            GridPoint(n_experts=k, delta=delta, mixing_ratio=ratio)
            for ratio in self.mixing_ratios
            for k in self.n_experts
            for delta in self.deltas
        ]


class NoiseConfig(BaseModel):
    kind: Literal["bernoulli", "beta"] = "beta"
    concentration: float = Field(default=20.0, gt=0.0)


class PathwiseConfig(BaseModel):
    enabled: bool = True
    panels: int = Field(default=50, ge=1)
    rounds: int = Field(default=500, ge=2)
    n_experts: int = Field(default=5, ge=2)


class BoundsConfig(BaseModel):
    """Bounds lab document, read from JSON or YAML."""

    grid: GridConfig
    replications: int = Field(default=DEFAULT_REPLICATIONS, ge=1)
    rounds: int = Field(default=DEFAULT_ROUNDS, ge=2)
    best_mean: float = Field(default=DEFAULT_BEST_MEAN, ge=0.0, lt=1.0)
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    amplitude: float = Field(default=0.5, gt=0.0, le=1.0)
    noise_share: float = Field(default=0.5, ge=0.0, le=1.0)
    c0: float = Field(default=DEFAULT_C0, gt=0.0)
    s_cap: float = Field(default=1.0, gt=0.0)
    pathwise: PathwiseConfig = Field(default_factory=PathwiseConfig)
    seed: int = Field(default=0, ge=0)
    output_dir: Optional[str] = None

    def to_settings(self) -> SuiteSettings:
        return SuiteSettings(
            replications=self.replications,
            n_rounds=self.rounds,
            best_mean=self.best_mean,
            noise=NoiseSpec(kind=self.noise.kind, concentration=self.noise.concentration),
            amplitude=self.amplitude,
            noise_share=self.noise_share,
            c0=self.c0,
        )


def load_bounds_config(path: Path | str) -> BoundsConfig:
    path = Path(path)
    try:
        return BoundsConfig.model_validate(read_config_document(path))
    except ValidationError as exc:
        first = exc.errors()[0]
        location = ".".join(str(part) for part in first["loc"])
        raise ConfigError("Invalid bounds config {}: {} ({})".format(path, first["msg"], location)) from exc


@dataclass
class BoundsOutcome:
    out_dir: Path
    run_id: str
    rows: List[ValidationRow]
    pathwise: Optional[PathwiseReport]
    summary: Dict[str, Any]

    @property
    def failures(self) -> List[ValidationRow]:
        return [row for row in self.rows if row.failed]


def report_frame(rows: List[ValidationRow]) -> pd.DataFrame:
    return pd.DataFrame.from_records([row.to_record() for row in rows], columns=list(REPORT_COLUMNS))


def worstcase_frame(config: BoundsConfig) -> pd.DataFrame:
    records = []
    for k in sorted(set(config.grid.n_experts)):
        bounds = worstcase_hedge_bound(config.rounds, k, config.s_cap)
        records.append(
            {
                "K": k,
                "horizon": config.rounds,
                "s_cap": config.s_cap,
                "decreasing": bounds.decreasing,
                "optimal_constant": bounds.optimal_constant,
                "adahedge": bounds.adahedge,
            }
        )
    return pd.DataFrame.from_records(records, columns=list(WORSTCASE_COLUMNS))


def _execute(config: BoundsConfig, seed: int, threads: int, archive: RunArchive) -> BoundsOutcome:
    points = config.grid.points()
    append_run_event(
        archive,
        level="INFO",
        event="grid_started",
        step="montecarlo",
        message="Monte Carlo grid started",
        data={"points": len(points), "replications": config.replications, "rounds": config.rounds},
    )
    rows = validate_grid(points, config.to_settings(), seed, threads=threads)
    report_path = write_frame(report_frame(rows), archive.out_dir / "bounds_report.csv")
    register_output(archive, report_path, "table")
    register_output(archive, write_frame(worstcase_frame(config), archive.out_dir / "worstcase_bounds.csv"), "table")

    pathwise: Optional[PathwiseReport] = None
    if config.pathwise.enabled:
        pathwise = pathwise_checks(
            n_panels=config.pathwise.panels,
            n_rounds=config.pathwise.rounds,
            n_experts=config.pathwise.n_experts,
            seed=seed,
            c0=config.c0,
        )
        frame = pd.DataFrame(
            [
                {
                    "panels": pathwise.panels,
                    "rounds": pathwise.rounds,
                    "n_experts": config.pathwise.n_experts,
                    "decreasing_violations": pathwise.decreasing_violations,
                    "adahedge_violations": pathwise.adahedge_violations,
                    "ftl_violations": pathwise.ftl_violations,
                }
            ],
            columns=list(PATHWISE_COLUMNS),
        )
        register_output(archive, write_frame(frame, archive.out_dir / "pathwise_report.csv"), "table")

    failed = [row for row in rows if row.failed]
    summary = {
        "rows": len(rows),
        "passed": sum(1 for row in rows if row.passed),
        "tied": sum(1 for row in rows if row.status == "TIED"),
        "failed": [
            {"scheme": row.scheme, "K": row.K, "delta": row.delta, "mixing_ratio": row.mixing_ratio} for row in failed
        ],
        "plateau_failures": sum(1 for row in rows if not row.plateau_ok),
        "pathwise_violations": pathwise.total_violations if pathwise is not None else None,
    }
    return BoundsOutcome(out_dir=archive.out_dir, run_id=archive.run_id, rows=rows, pathwise=pathwise, summary=summary)


def _failure_message(outcome: BoundsOutcome) -> Optional[str]:
    problems = []
    if outcome.failures:
        problems.append("{} report rows exceed their bound".format(len(outcome.failures)))
    if outcome.pathwise is not None and outcome.pathwise.total_violations:
        problems.append("{} pathwise bound violations".format(outcome.pathwise.total_violations))
    return "; ".join(problems) or None


def cmd_bounds(
    config_path: Path | str,
    app_config: Optional[AppConfig] = None,
    *,
    out_dir: Optional[Path | str] = None,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
) -> BoundsOutcome:
    """Run the regret-bound validation grid and write ``bounds_report.csv``.

    Output directory and seed follow the same precedence as ``cmd_run``.

    Returns:
        BoundsOutcome: Report rows, pathwise summary and run id.

    Raises:
        ConfigError: For invalid configs, including nonpositive gaps.
        ValidationFailure: If any row FAILs or a pathwise bound is violated;
            the report is written before raising.
    """
    config_path = Path(config_path)
    app_config = app_config or AppConfig()
    config = load_bounds_config(config_path)
    runtime = app_config.runtime
    seed = seed if seed is not None else runtime.seed if runtime.seed is not None else config.seed
    threads = threads or runtime.threads
    target_dir = resolve_output_dir(config_path, config.output_dir, out_dir, runtime.output_dir)

    settings = {"config": config.model_dump(mode="json"), "seed": seed}
    run_id = build_run_id("bounds", settings)
    archive = initialize_run_archive(target_dir, run_id)
    append_run_event(archive, level="INFO", event="run_started", step="bounds", message="Bounds lab started")
    logger.info("Bounds run {} writing to {}", run_id, target_dir)

    try:
        outcome = _execute(config, seed, threads, archive)
    except Exception as exc:
        code = exc.exit_code if isinstance(exc, EnsembleError) else EXIT_UNEXPECTED
        append_run_event(
            archive,
            level="ERROR",
            event="run_failed",
            step="bounds",
            message="Bounds lab failed",
            data={"error": str(exc)},
        )
        metadata = format_run_metadata(archive, command="bounds", return_code=code, settings=settings, error=str(exc))
        finalize_run_archive(archive, metadata)
        raise

    failure = _failure_message(outcome)
    if failure is not None:
        append_run_event(archive, level="ERROR", event="validation_failed", step="bounds", message=failure)
        metadata = format_run_metadata(
            archive,
            command="bounds",
            return_code=EXIT_VALIDATION,
            settings=settings,
            summary=outcome.summary,
            error=failure,
        )
        finalize_run_archive(archive, metadata)
        raise ValidationFailure(failure)

    append_run_event(archive, level="INFO", event="run_completed", step="bounds", message="Bounds lab completed")
    metadata = format_run_metadata(archive, command="bounds", return_code=0, settings=settings, summary=outcome.summary)
    finalize_run_archive(archive, metadata)
    logger.info("All {} report rows within their bounds", len(outcome.rows))
    return outcome
