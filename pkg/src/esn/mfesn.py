"""Multi-frequency echo state networks and their random-parameter ensembles.

Tempo convention: inside low-frequency period t, sub-observation s of a
group with ratio kappa sits at time ``t + s / kappa``. Sub-observation 0 is
the end of period t itself, so ``(t, kappa)`` and ``(t + 1, 0)`` coincide.
A group stores its observations as a ``T x kappa x d`` array whose row-major
flattening is chronological. The state used to forecast ``Y_{t+1}`` is the
reservoir state right after absorbing observation ``(t, 0)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from src.errors import (
    ConfigError,
    DimensionMismatchError,
    EnsembleSizeError,
    InsufficientDataError,
    MissingObservationError,
    NotFittedError,
)
from src.esn.readout import DEFAULT_LAMBDA_GRID, FoldSpec, ReadoutCoefficients, fit_ridge, select_lambda
from src.esn.reservoir import HyperParams, ReservoirDistributions, ReservoirSpec, sample_reservoir, step
from src.utils.parallel import derive_seed, map_ordered

DEFAULT_WASHOUT = 4
DEFAULT_ALPHA_GRID = (0.1, 0.3, 0.5, 0.7, 0.9)
MIN_TRAINING_ROWS = 8


class Architecture(str, Enum):
    SINGLE = "single"
    MULTI = "multi"


class EnsembleFamily(str, Enum):
    EN_RP = "EN_RP"
    EN_ALPHA_RP = "EN_ALPHA_RP"


@dataclass(frozen=True, eq=False)
class FrequencyGroup:
    name: str
    kappa: int
    values: np.ndarray = field(repr=False)
    columns: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.kappa < 1:
            raise ConfigError("Group {} has kappa={}, expected >= 1".format(self.name, self.kappa))
        if self.values.ndim != 3 or self.values.shape[1] != self.kappa:
            raise DimensionMismatchError(
                "Group {} values must be T x {} x d, got {}".format(self.name, self.kappa, self.values.shape)
            )

    @property
    def dim(self) -> int:
        return int(self.values.shape[2])

    @property
    def n_periods(self) -> int:
        return int(self.values.shape[0])

    def flat(self) -> np.ndarray:
        return self.values.reshape(self.n_periods * self.kappa, self.dim)


@dataclass(frozen=True, eq=False)
class MultiFreqSeries:
    target: np.ndarray = field(repr=False)
    groups: Tuple[FrequencyGroup, ...]
    periods: Optional[pd.PeriodIndex] = None

    def __post_init__(self) -> None:
        if self.target.ndim != 1 or not np.all(np.isfinite(self.target)):
            raise DimensionMismatchError("Target must be a finite vector")
        for group in self.groups:
            if group.n_periods != self.target.shape[0]:
                raise DimensionMismatchError(
                    "Group {} covers {} periods, target covers {}".format(
                        group.name, group.n_periods, self.target.shape[0]
                    )
                )
        if self.periods is not None and len(self.periods) != self.target.shape[0]:
            raise DimensionMismatchError("Period labels do not match the target length")

    @property
    def n_periods(self) -> int:
        return int(self.target.shape[0])

    @property
    def span(self) -> Tuple[str, str]:
        if self.periods is None:
            return "0", str(self.n_periods - 1)
        return str(self.periods[0]), str(self.periods[-1])

    def locate(self, label: str | int) -> int:
        """Index of a period given as an integer or a label like ``"2008Q1"``."""
        if isinstance(label, int):
            index = label
        elif self.periods is None:
            index = int(label)
        else:
            try:
                index = int(self.periods.get_loc(pd.Period(label, freq=self.periods.freq)))
            except KeyError as exc:
                raise ConfigError("Period {} is outside the data span {}".format(label, self.span)) from exc
        if not 0 <= index < self.n_periods:
            raise ConfigError("Period index {} is outside [0, {})".format(index, self.n_periods))
        return index


@dataclass(frozen=True)
class ReservoirTemplate:
    dim_state: int
    sparsity: float
    hyper: HyperParams = HyperParams()
    distributions: ReservoirDistributions = ReservoirDistributions()


@dataclass(frozen=True)
class LambdaPolicy:
    fixed: Optional[float] = None
    grid: Tuple[float, ...] = DEFAULT_LAMBDA_GRID
    folds: FoldSpec = FoldSpec()


@dataclass(frozen=True)
class MfesnTemplate:
    architecture: Architecture
    reservoirs: Tuple[ReservoirTemplate, ...]
    washout: int = DEFAULT_WASHOUT
    lambda_policy: LambdaPolicy = LambdaPolicy()

    def with_alpha(self, alpha: float) -> "MfesnTemplate":
        """Same template with every reservoir's leak rate set to ``alpha``."""
        reservoirs = tuple(replace(r, hyper=replace(r.hyper, alpha=alpha)) for r in self.reservoirs)
        return replace(self, reservoirs=reservoirs)


@dataclass(frozen=True, eq=False)
class MfesnModel:
    architecture: Architecture
    reservoirs: Tuple[ReservoirSpec, ...]
    kappas: Tuple[int, ...]
    washout: int = DEFAULT_WASHOUT
    seed: int = 0
    readout: Optional[ReadoutCoefficients] = None

    @property
    def state_dim(self) -> int:
        return sum(spec.dim_state for spec in self.reservoirs)

    @property
    def alpha(self) -> float:
        return self.reservoirs[0].hyper.alpha

    @property
    def is_fitted(self) -> bool:
        return self.readout is not None


def instantiate_model(template: MfesnTemplate, data: MultiFreqSeries, seed: int) -> MfesnModel:
    """Draw the reservoirs of ``template`` for the groups of ``data``.

    Reservoir q is seeded with a child seed of ``(seed, q)``.
    """
    kappas = tuple(group.kappa for group in data.groups)
    if template.architecture is Architecture.MULTI:
        if len(template.reservoirs) != len(data.groups):
            raise ConfigError(
                "Multi-reservoir template has {} reservoirs for {} groups".format(
                    len(template.reservoirs), len(data.groups)
                )
            )
        input_dims = [group.dim for group in data.groups]
    else:
        if len(template.reservoirs) != 1:
            raise ConfigError("Single-reservoir template needs exactly one reservoir")
        input_dims = [sum(group.dim for group in data.groups)]
    reservoirs = tuple(
        sample_reservoir(
            dim_state=res.dim_state,
            dim_input=dim_input,
            sparsity=res.sparsity,
            seed=derive_seed(seed, q),
            hyper=res.hyper,
            distributions=res.distributions,
        )
        for q, (res, dim_input) in enumerate(zip(template.reservoirs, input_dims))
    )
    return MfesnModel(
        architecture=template.architecture,
        reservoirs=reservoirs,
        kappas=kappas,
        washout=template.washout,
        seed=seed,
    )


def _held_inputs(data: MultiFreqSeries) -> Tuple[np.ndarray, int]:
    """All groups on the finest grid, each holding its latest available observation."""
    kappa_max = max(group.kappa for group in data.groups)
    positions = np.arange(data.n_periods * kappa_max)
    period, sub = positions // kappa_max, positions % kappa_max
    blocks = []
    for group in data.groups:
        if kappa_max % group.kappa:
            raise ConfigError(
                "Group {} (kappa={}) does not divide the finest ratio {}".format(group.name, group.kappa, kappa_max)
            )
        source = period * group.kappa + (sub * group.kappa) // kappa_max
        blocks.append(group.flat()[source])
    return np.hstack(blocks), kappa_max


def _iterate_group(
    spec: ReservoirSpec, inputs: np.ndarray, kappa: int, n_periods: int, group_index: int, name: str
) -> np.ndarray:
    """Run one reservoir over its inputs and keep the state at each period start.

    A slot counts as observed only when every input column is finite. After the
    last observed slot the state is carried forward unchanged. For the single
    reservoir the inputs stack every group, so the ragged edge of whichever
    group stops reporting first freezes the whole state, including the columns
    of groups that are still reporting.
    """
    available = np.all(np.isfinite(inputs), axis=1)
    if not available.any():
        raise MissingObservationError(group_index, 0, 0, name)
    last = int(np.flatnonzero(available)[-1])
    gaps = np.flatnonzero(~available[: last + 1])
    if gaps.size:
        position = int(gaps[0])
        raise MissingObservationError(group_index, position // kappa, position % kappa, name)
    if last < inputs.shape[0] - 1:
        logger.debug("Group {} ragged edge: carrying state over {} trailing slots", name, inputs.shape[0] - 1 - last)

    state = np.zeros(spec.dim_state)
    aligned = np.empty((n_periods, spec.dim_state))
    for position in range(inputs.shape[0]):
        if position <= last:
            state = step(spec, state, inputs[position])
        if position % kappa == 0:
            aligned[position // kappa] = state
    return aligned


def harvest_states(model: MfesnModel, data: MultiFreqSeries) -> np.ndarray:
    """Stacked aligned states ``X_{t,Q}`` for every period, ``T x D_Q``."""
    if tuple(group.kappa for group in data.groups) != model.kappas:
        raise DimensionMismatchError("Model was built for ratios {}, data has other groups".format(model.kappas))
    if model.architecture is Architecture.SINGLE:
        inputs, kappa_max = _held_inputs(data)
        return _iterate_group(model.reservoirs[0], inputs, kappa_max, data.n_periods, 0, "all")
    blocks = [
        _iterate_group(spec, group.flat(), group.kappa, data.n_periods, q, group.name)
        for q, (spec, group) in enumerate(zip(model.reservoirs, data.groups))
    ]
    return np.hstack(blocks)


def align_states(model: MfesnModel, data: MultiFreqSeries, t: int) -> np.ndarray:
    """Concatenation of every group's state at tempo index ``(t, 0)``, group order preserved."""
    if not 0 <= t < data.n_periods:
        raise ConfigError("Period {} is outside [0, {})".format(t, data.n_periods))
    return harvest_states(model, data)[t]


def training_rows(model: MfesnModel, train_span: Tuple[int, int]) -> np.ndarray:
    """Periods t whose state X_t is regressed on Y_{t+1} inside ``train_span``."""
    start, end = train_span
    return np.arange(max(start, model.washout), end)


def fit_mfesn(
    model: MfesnModel,
    data: MultiFreqSeries,
    train_span: Tuple[int, int],
    lambda_policy: LambdaPolicy | None = None,
    states: Optional[np.ndarray] = None,
) -> MfesnModel:
    """Fit the ridge readout ``Y_{t+1} = b + W' X_t`` over ``train_span``.

    Args:
        model: Model with drawn reservoirs; any existing readout is replaced.
        data: Series the states are harvested from.
        train_span: Inclusive ``(first, last)`` period indices of the training targets' span.
        lambda_policy: Fixed penalty or cross-validation grid.
        states: Previously harvested states of ``model`` on ``data``.

    Returns:
        MfesnModel: Copy of ``model`` with its readout set.

    Raises:
        InsufficientDataError: With fewer than 8 training rows.
    """
    lambda_policy = lambda_policy or LambdaPolicy()
    start, end = train_span
    if not 0 <= start < end < data.n_periods:
        raise ConfigError("Training span {} is outside the data span".format(train_span))
    states = harvest_states(model, data) if states is None else states
    rows = training_rows(model, train_span)
    if rows.size < MIN_TRAINING_ROWS:
        raise InsufficientDataError(
            "Only {} training rows after washout {}, need {}".format(rows.size, model.washout, MIN_TRAINING_ROWS)
        )
    if rows.size < model.state_dim / 2:
        logger.warning("{} training rows for a {}-dimensional state", rows.size, model.state_dim)
    design, targets = states[rows], data.target[rows + 1]
    if lambda_policy.fixed is not None:
        lam = lambda_policy.fixed
    else:
        lam = select_lambda(design, targets, lambda_policy.grid, lambda_policy.folds)
    return replace(model, readout=fit_ridge(design, targets, lam))


def forecast_one_step(
    model: MfesnModel, data: MultiFreqSeries, t: int, states: Optional[np.ndarray] = None
) -> float:
    """Forecast of ``Y_{t+1}`` from the aligned state at period ``t``."""
    if model.readout is None:
        raise NotFittedError("Model seed={} has no fitted readout".format(model.seed))
    state = align_states(model, data, t) if states is None else states[t]
    return float(model.readout.intercept + np.dot(model.readout.weights, state))


@dataclass(frozen=True)
class EnsembleSpec:
    family: EnsembleFamily
    size: int
    base: MfesnTemplate
    alpha_grid: Tuple[float, ...] = DEFAULT_ALPHA_GRID
    master_seed: int = 0
    seeds: Tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.size < 1:
            raise EnsembleSizeError("Ensemble size must be >= 1, got {}".format(self.size))
        if self.seeds and len(self.seeds) != self.size:
            raise EnsembleSizeError("Got {} seeds for {} models".format(len(self.seeds), self.size))
        if self.family is EnsembleFamily.EN_ALPHA_RP:
            if not self.alpha_grid:
                raise ConfigError("EN_ALPHA_RP needs a nonempty leak-rate grid")
            if self.size % len(self.alpha_grid):
                raise EnsembleSizeError(
                    "Ensemble size {} is not divisible by the {} leak rates of the grid".format(
                        self.size, len(self.alpha_grid)
                    )
                )

    def member_seeds(self) -> List[int]:
        if self.seeds:
            return list(self.seeds)
        return [derive_seed(self.master_seed, k) for k in range(self.size)]

    def member_templates(self) -> List[MfesnTemplate]:
        if self.family is EnsembleFamily.EN_RP:
            return [self.base] * self.size
        grid = self.alpha_grid
        return [self.base.with_alpha(grid[k % len(grid)]) for k in range(self.size)]


def build_ensemble(
    spec: EnsembleSpec, data: MultiFreqSeries, train_span: Tuple[int, int], threads: int = 1
) -> List[MfesnModel]:
    """Draw and fit ``spec.size`` models independently, in member order."""

    def _fit_member(args: Tuple[MfesnTemplate, int]) -> MfesnModel:
        template, seed = args
        model = instantiate_model(template, data, seed)
        return fit_mfesn(model, data, train_span, template.lambda_policy)

    members = list(zip(spec.member_templates(), spec.member_seeds()))
    models = map_ordered(_fit_member, members, threads)
    logger.info("Fitted {} {} models on periods {}..{}", len(models), spec.family.value, *train_span)
    return models


def ensemble_alphas(models: Sequence[MfesnModel]) -> np.ndarray:
    return np.array([model.alpha for model in models])
