"""Forecasting experiment: fit ensembles, run the online combiners, write the result tables."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import yaml
from loguru import logger
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from src.combiner.schemes import Scheme
from src.config import AppConfig
from src.dataio.loader import load_dataset
from src.errors import EXIT_UNEXPECTED, ConfigError, EnsembleError
from src.esn.benchmarks import BENCHMARKS, benchmark_forecasts
from src.esn.mfesn import (
    DEFAULT_ALPHA_GRID,
    DEFAULT_WASHOUT,
    Architecture,
    EnsembleFamily,
    EnsembleSpec,
    LambdaPolicy,
    MfesnTemplate,
    MultiFreqSeries,
    ReservoirTemplate,
    build_ensemble,
    ensemble_alphas,
)
from src.esn.online import OnlineExerciseResult, SchemeSettings, run_online_exercise
from src.esn.readout import DEFAULT_LAMBDA_GRID, FoldSpec
from src.esn.reservoir import HyperParams, ReservoirDistributions
from src.runner.archive import (
    RunArchive,
    append_run_event,
    build_run_id,
    finalize_run_archive,
    format_run_metadata,
    initialize_run_archive,
    register_output,
)
from src.runner.outputs import (
    ecdf_by_alpha_frame,
    ecdf_frame,
    forecasts_frame,
    msfe_table,
    write_frame,
    write_regret,
    write_weights,
)
from src.utils.parallel import derive_seed

SCHEME_PARAMS = frozenset({"eta", "planned_rounds", "recursive", "c0", "s_cap", "window", "epsilon", "horizon"})
Label = Union[int, str]


class ReservoirConfig(BaseModel):
    dim_state: int = Field(ge=1)
    sparsity: float = Field(default=0.2, gt=0.0, le=1.0)
    alpha: float = 0.1
    rho: float = 0.5
    gamma: float = 1.0
    sigma_shift: float = 0.0
    state_distribution: Literal["normal", "uniform"] = "normal"
    input_distribution: Literal["normal", "uniform"] = "uniform"
    shift_distribution: Literal["zero", "normal", "uniform"] = "zero"
    norm: Literal["fro", "spectral"] = "fro"

    def to_template(self) -> ReservoirTemplate:
        return ReservoirTemplate(
            dim_state=self.dim_state,
            sparsity=self.sparsity,
            hyper=HyperParams(alpha=self.alpha, rho=self.rho, gamma=self.gamma, sigma_shift=self.sigma_shift),
            distributions=ReservoirDistributions(
                state=self.state_distribution,
                input=self.input_distribution,
                shift=self.shift_distribution,
                norm=self.norm,
            ),
        )


class LambdaConfig(BaseModel):
    fixed: Optional[float] = Field(default=None, ge=0.0)
    grid: List[float] = Field(default_factory=lambda: list(DEFAULT_LAMBDA_GRID))
    folds: int = Field(default=5, ge=1)
    block: Optional[int] = Field(default=None, ge=1)

    def to_policy(self) -> LambdaPolicy:
        folds = FoldSpec(n_folds=self.folds, block=self.block)
        return LambdaPolicy(fixed=self.fixed, grid=tuple(self.grid), folds=folds)


class ModelConfig(BaseModel):
    name: str
    architecture: Architecture = Architecture.MULTI
    reservoirs: List[ReservoirConfig] = Field(min_length=1)
    washout: int = Field(default=DEFAULT_WASHOUT, ge=0)
    ridge: LambdaConfig = Field(default_factory=LambdaConfig)

    def to_template(self) -> MfesnTemplate:
        return MfesnTemplate(
            architecture=self.architecture,
            reservoirs=tuple(res.to_template() for res in self.reservoirs),
            washout=self.washout,
            lambda_policy=self.ridge.to_policy(),
        )


class EnsembleConfig(BaseModel):
    name: str
    model: str
    family: EnsembleFamily = EnsembleFamily.EN_RP
    size: int = Field(gt=0)
    alpha_grid: List[float] = Field(default_factory=lambda: list(DEFAULT_ALPHA_GRID))

    @property
    def slug(self) -> str:
        return re.sub(r"[^a-z0-9]+", "_", self.name.lower()).strip("_") or "ensemble"


class SchemeConfig(BaseModel):
    scheme: Scheme
    params: Dict[str, Any] = Field(default_factory=dict)

    @field_validator("params")
    @classmethod
    def _known_params(cls, value: Dict[str, Any]) -> Dict[str, Any]:
        unknown = set(value) - SCHEME_PARAMS
        if unknown:
            raise ValueError("unknown scheme parameters {}".format(sorted(unknown)))
        return value

    def to_settings(self) -> SchemeSettings:
        return SchemeSettings(scheme=self.scheme, params=dict(self.params))


class SpanConfig(BaseModel):
    train: Tuple[Label, Label]
    evaluate: Tuple[Label, Label]


class DataConfig(BaseModel):
    manifest: str
    daily_kappa: Optional[int] = Field(default=None, ge=1)


class ExperimentConfig(BaseModel):
    """Experiment document, read from JSON or YAML."""

    data: DataConfig
    models: List[ModelConfig] = Field(min_length=1)
    ensembles: List[EnsembleConfig] = Field(min_length=1)
    schemes: List[SchemeConfig] = Field(min_length=1)
    spans: SpanConfig
    benchmarks: List[Literal["mean", "ar1"]] = Field(default_factory=lambda: list(BENCHMARKS))
    baseline: Literal["mean", "ar1"] = "mean"
    seed: int = Field(default=0, ge=0)
    output_dir: Optional[str] = None

    @model_validator(mode="after")
    def _check_references(self) -> "ExperimentConfig":
        model_names = [model.name for model in self.models]
        if len(set(model_names)) != len(model_names):
            raise ValueError("model names must be unique")
        slugs = [ensemble.slug for ensemble in self.ensembles]
        if len(set(slugs)) != len(slugs):
            raise ValueError("ensemble names must be unique")
        for ensemble in self.ensembles:
            if ensemble.model not in model_names:
                raise ValueError("ensemble {!r} references unknown model {!r}".format(ensemble.name, ensemble.model))
        schemes = [entry.scheme for entry in self.schemes]
        if len(set(schemes)) != len(schemes):
            raise ValueError("each scheme may be listed once")
        if self.baseline not in self.benchmarks:
            raise ValueError("baseline {!r} must be one of the benchmarks".format(self.baseline))
        return self

    def find_model(self, name: str) -> ModelConfig:
        return next(model for model in self.models if model.name == name)


def read_config_document(path: Path) -> Dict[str, Any]:
    """Parse a JSON or YAML file into a mapping."""
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigError("Config file not found: {}".format(path)) from exc
    try:
        payload = yaml.safe_load(text) if path.suffix.lower() in (".yaml", ".yml") else json.loads(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError("Config file {} does not parse: {}".format(path, exc)) from exc
    if not isinstance(payload, dict):
        raise ConfigError("Config file {} must contain a mapping".format(path))
    return payload


def load_experiment_config(path: Path | str) -> ExperimentConfig:
    path = Path(path)
    try:
        return ExperimentConfig.model_validate(read_config_document(path))
    except ValidationError as exc:
        first = exc.errors()[0]
        location = ".".join(str(part) for part in first["loc"])
        raise ConfigError("Invalid experiment config {}: {} ({})".format(path, first["msg"], location)) from exc


def resolve_spans(config: ExperimentConfig, data: MultiFreqSeries) -> Tuple[Tuple[int, int], Tuple[int, int]]:
    train = (data.locate(config.spans.train[0]), data.locate(config.spans.train[1]))
    evaluate = (data.locate(config.spans.evaluate[0]), data.locate(config.spans.evaluate[1]))
    if not train[0] < train[1] < evaluate[0] <= evaluate[1]:
        raise ConfigError("Spans must be ordered and disjoint: train {} evaluate {}".format(train, evaluate))
    return train, evaluate


@dataclass
class RunOutcome:
    out_dir: Path
    run_id: str
    results: Dict[str, OnlineExerciseResult]
    summary: Dict[str, Any]


def _period_labels(data: MultiFreqSeries, targets: np.ndarray) -> List[str]:
    if data.periods is None:
        return [str(int(t)) for t in targets]
    return [str(data.periods[int(t)]) for t in targets]


def _write_ensemble_files(archive: RunArchive, slug: str, result: OnlineExerciseResult) -> None:
    for scheme, outcome in result.outcomes.items():
        weights_path = write_weights(archive.out_dir / slug / "weights_{}.csv".format(scheme.slug), outcome.weights)
        register_output(archive, weights_path, "weights")
        regret_path = write_regret(archive.out_dir / slug / "regret_{}.csv".format(scheme.slug), outcome.ledgers)
        register_output(archive, regret_path, "regret")


def _ensemble_summary(result: OnlineExerciseResult) -> Dict[str, Any]:
    return {
        "normalizer": result.normalizer,
        "baseline_msfe": result.baseline_msfe,
        "schemes": {
            scheme.value: {
                "msfe": outcome.msfe,
                "relative_msfe": outcome.relative_msfe,
                "final_regret": outcome.ledgers[-1].cumulative_regret if outcome.ledgers else 0.0,
                "top5_share": outcome.top_share(5),
                "clamped_losses": outcome.clamped,
            }
            for scheme, outcome in result.outcomes.items()
        },
    }


def _execute(
    config: ExperimentConfig, manifest: Path, seed: int, threads: int, archive: RunArchive
) -> Tuple[Dict[str, OnlineExerciseResult], Dict[str, Any]]:
    data = load_dataset(manifest, daily_kappa=config.data.daily_kappa, threads=threads)
    train_span, eval_span = resolve_spans(config, data)
    append_run_event(
        archive,
        level="INFO",
        event="data_loaded",
        step="data",
        message="Dataset assembled",
        data={
            "periods": data.n_periods,
            "groups": [group.name for group in data.groups],
            "train": train_span,
            "evaluate": eval_span,
        },
    )

    bench_forecasts = {name: benchmark_forecasts(name, data, train_span, eval_span) for name in config.benchmarks}
    realized = data.target[eval_span[0] : eval_span[1] + 1]
    bench_msfe = {name: float(np.mean((values - realized) ** 2)) for name, values in bench_forecasts.items()}
    baseline_msfe = bench_msfe[config.baseline]
    bench_relative = {name: value / baseline_msfe for name, value in bench_msfe.items()}

    results: Dict[str, OnlineExerciseResult] = {}
    alphas: Dict[str, np.ndarray] = {}
    schemes = [entry.to_settings() for entry in config.schemes]
    for index, ensemble in enumerate(config.ensembles):
        spec = EnsembleSpec(
            family=ensemble.family,
            size=ensemble.size,
            base=config.find_model(ensemble.model).to_template(),
            alpha_grid=tuple(ensemble.alpha_grid),
            master_seed=derive_seed(seed, index),
        )
        models = build_ensemble(spec, data, train_span, threads=threads)
        result = run_online_exercise(
            models, data, schemes, eval_span, train_span, baseline=bench_forecasts[config.baseline], threads=threads
        )
        results[ensemble.name] = result
        alphas[ensemble.name] = ensemble_alphas(models)
        _write_ensemble_files(archive, ensemble.slug, result)
        append_run_event(
            archive,
            level="INFO",
            event="ensemble_completed",
            step="online",
            message="Online exercise finished",
            data={"ensemble": ensemble.name, "members": len(models), "rounds": int(result.realized.size)},
        )
        logger.info("Ensemble {}: {} members over {} rounds", ensemble.name, len(models), result.realized.size)

    table = msfe_table(bench_relative, results)
    register_output(archive, write_frame(table, archive.out_dir / "msfe_table.csv"), "table")
    ecdf = ecdf_frame(results, alphas)
    register_output(archive, write_frame(ecdf, archive.out_dir / "ecdf.csv"), "table")
    register_output(archive, write_frame(ecdf_by_alpha_frame(ecdf), archive.out_dir / "ecdf_by_alpha.csv"), "table")
    targets = next(iter(results.values())).target_periods
    forecasts = forecasts_frame(results, _period_labels(data, targets), bench_forecasts)
    register_output(archive, write_frame(forecasts, archive.out_dir / "forecasts.csv"), "table")

    summary = {
        "data_span": list(data.span),
        "train_span": _period_labels(data, np.array(train_span)),
        "evaluate_span": _period_labels(data, np.array(eval_span)),
        "benchmark_msfe": bench_msfe,
        "ensembles": {name: _ensemble_summary(result) for name, result in results.items()},
    }
    return results, summary


def cmd_run(
    config_path: Path | str,
    app_config: Optional[AppConfig] = None,
    *,
    out_dir: Optional[Path | str] = None,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
) -> RunOutcome:
    """Run a forecasting experiment end to end.

    Output directory precedence: ``out_dir`` > ``ESN_OUTPUT_DIR`` > the
    config's ``output_dir`` > ``outputs/<config stem>``. Seed precedence:
    ``seed`` > ``ESN_SEED`` > the config's ``seed``.

    Returns:
        RunOutcome: Output location, run id, per-ensemble results and summary.

    Raises:
        ConfigError: For invalid configs or spans.
        DataError: For unreadable or inconsistent data.
        ValidationFailure: If a weight row leaves the simplex at write time.
    """
    config_path = Path(config_path)
    app_config = app_config or AppConfig()
    config = load_experiment_config(config_path)
    runtime = app_config.runtime
    seed = seed if seed is not None else runtime.seed if runtime.seed is not None else config.seed
    threads = threads or runtime.threads
    target_dir = resolve_output_dir(config_path, config.output_dir, out_dir, runtime.output_dir)
    manifest = _config_relative(config_path, config.data.manifest)

    settings = {"config": config.model_dump(mode="json"), "seed": seed}
    run_id = build_run_id("run", settings)
    archive = initialize_run_archive(target_dir, run_id)
    append_run_event(archive, level="INFO", event="run_started", step="run", message="Experiment started")
    logger.info("Run {} writing to {}", run_id, target_dir)

    try:
        results, summary = _execute(config, manifest, seed, threads, archive)
    except Exception as exc:
        code = exc.exit_code if isinstance(exc, EnsembleError) else EXIT_UNEXPECTED
        append_run_event(
            archive,
            level="ERROR",
            event="run_failed",
            step="run",
            message="Experiment failed",
            data={"error": str(exc)},
        )
        metadata = format_run_metadata(archive, command="run", return_code=code, settings=settings, error=str(exc))
        finalize_run_archive(archive, metadata)
        raise
    append_run_event(archive, level="INFO", event="run_completed", step="run", message="Experiment completed")
    metadata = format_run_metadata(archive, command="run", return_code=0, settings=settings, summary=summary)
    finalize_run_archive(archive, metadata)
    return RunOutcome(out_dir=target_dir, run_id=run_id, results=results, summary=summary)


def resolve_output_dir(
    config_path: Path, configured: Optional[str], out_dir: Optional[Path | str], env_dir: Optional[str]
) -> Path:
    """``out_dir`` > ``ESN_OUTPUT_DIR`` > the config's ``output_dir`` > ``outputs/<config stem>``."""
    return Path(out_dir or env_dir or _config_relative(config_path, configured) or Path("outputs") / config_path.stem)


def _config_relative(config_path: Path, value: Optional[str]) -> Optional[Path]:
    if value is None:
        return None
    path = Path(value)
    return path if path.is_absolute() else config_path.parent / path
