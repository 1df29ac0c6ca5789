"""Online combination of fitted ensemble members over an evaluation span."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from src.combiner.ledger import RegretLedger, new_ledger, record_regret
from src.combiner.panel import clamp_losses, combine_forecasts
from src.combiner.schemes import CombinerState, Scheme, advance, init_state
from src.errors import ConfigError, DimensionMismatchError
from src.esn.mfesn import MfesnModel, MultiFreqSeries, harvest_states, training_rows
from src.utils.parallel import map_ordered


@dataclass(frozen=True)
class SchemeSettings:
    scheme: Scheme
    params: Mapping[str, Any] = field(default_factory=dict)

    def initial_state(self, n_experts: int, n_rounds: int) -> CombinerState:
        params = dict(self.params)
        if self.scheme is Scheme.HEDGE_CONSTANT and params.get("eta") is None:
            params.setdefault("planned_rounds", n_rounds)
        return init_state(self.scheme, n_experts, **params)


@dataclass
class SchemeOutcome:
    scheme: Scheme
    forecasts: np.ndarray
    weights: np.ndarray
    ledgers: List[RegretLedger]
    msfe: float
    relative_msfe: Optional[float]
    final_state: CombinerState
    clamped: int = 0

    def top_share(self, top: int = 5) -> float:
        """Mass of the ``top`` heaviest experts in the last round's weights."""
        last = np.sort(self.weights[-1])[::-1]
        return float(last[:top].sum())


@dataclass
class OnlineExerciseResult:
    target_periods: np.ndarray
    realized: np.ndarray
    expert_forecasts: np.ndarray
    expert_msfe: np.ndarray
    normalizer: float
    outcomes: Dict[Scheme, SchemeOutcome]
    baseline_msfe: Optional[float] = None

    @property
    def relative_expert_msfe(self) -> np.ndarray:
        if self.baseline_msfe is None:
            return self.expert_msfe
        return self.expert_msfe / self.baseline_msfe


def _msfe(forecasts: np.ndarray, realized: np.ndarray) -> float:
    return float(np.mean((np.asarray(forecasts) - realized) ** 2))


def loss_normalizer(
    models: Sequence[MfesnModel], states: Sequence[np.ndarray], data: MultiFreqSeries, train_span: Tuple[int, int]
) -> float:
    """Largest in-sample squared error of any member over its training rows."""
    worst = 0.0
    for model, model_states in zip(models, states):
        rows = training_rows(model, train_span)
        fitted = model.readout.predict(model_states[rows])
        worst = max(worst, float(np.max((fitted - data.target[rows + 1]) ** 2)))
    if worst <= 0.0:
        logger.warning("Training sample has zero squared error; using loss normalizer 1.0")
        return 1.0
    return worst


def run_online_exercise(
    models: Sequence[MfesnModel],
    data: MultiFreqSeries,
    schemes: Sequence[Union[SchemeSettings, CombinerState]],
    eval_span: Tuple[int, int],
    train_span: Tuple[int, int],
    baseline: Optional[np.ndarray] = None,
    threads: int = 1,
) -> OnlineExerciseResult:
    """Play the combiners against the frozen members over ``eval_span``.

    Round r forecasts the target of period ``eval_span[0] + r`` from the
    aligned states of the previous period. Every combiner commits to its
    weights before the target is revealed; squared errors divided by the
    training-sample normalizer and clamped to [0, 1] are then fed back.

    Args:
        models: Fitted members, all trained on ``train_span``.
        data: Mixed-frequency series.
        schemes: Scheme settings, or ready-made initial states.
        eval_span: Inclusive ``(first, last)`` target periods.
        train_span: Span the members were fitted on; must end before ``eval_span``.
        baseline: Baseline forecasts for the same target periods, for relative MSFE.
        threads: Worker threads for state harvesting.

    Returns:
        OnlineExerciseResult: Per-scheme forecasts, weights, ledgers and MSFE.

    Raises:
        ConfigError: If the spans overlap or a member is unfitted.
        DimensionMismatchError: If a combiner state or the baseline does not match the ensemble.
    """
    if not models:
        raise ConfigError("Online exercise needs at least one model")
    first, last = eval_span
    if not train_span[1] < first <= last < data.n_periods:
        raise ConfigError("Evaluation span {} must follow training span {}".format(eval_span, train_span))
    if any(not model.is_fitted for model in models):
        raise ConfigError("All members must be fitted before the online exercise")

    n_experts = len(models)
    targets = np.arange(first, last + 1)
    n_rounds = targets.size
    realized = data.target[targets]
    states = map_ordered(lambda model: harvest_states(model, data), models, threads)
    expert_forecasts = np.column_stack(
        [model.readout.predict(model_states[targets - 1]) for model, model_states in zip(models, states)]
    )
    normalizer = loss_normalizer(models, states, data, train_span)

    combiners: List[CombinerState] = []
    for item in schemes:
        state = item if isinstance(item, CombinerState) else item.initial_state(n_experts, n_rounds)
        if state.n_experts != n_experts:
            raise DimensionMismatchError(
                "Combiner {} tracks {} experts, ensemble has {}".format(state.scheme.value, state.n_experts, n_experts)
            )
        combiners.append(state)
    if len({state.scheme for state in combiners}) != len(combiners):
        raise ConfigError("Each scheme may appear only once per exercise")

    forecasts = np.empty((len(combiners), n_rounds))
    weights = np.empty((len(combiners), n_rounds, n_experts))
    ledgers: List[List[RegretLedger]] = [[] for _ in combiners]
    running = [new_ledger(n_experts) for _ in combiners]
    clamped = 0
    for r in range(n_rounds):
        expert_row = expert_forecasts[r]
        for c, state in enumerate(combiners):
            weights[c, r] = state.weights
            forecasts[c, r] = combine_forecasts(state.weights, expert_row)
        loss_row, n_clamped = clamp_losses((expert_row - realized[r]) ** 2 / normalizer)
        clamped += n_clamped
        for c, state in enumerate(combiners):
            running[c] = record_regret(running[c], state.weights, loss_row)
            ledgers[c].append(running[c])
            combiners[c] = advance(state, loss_row)

    expert_msfe = np.mean((expert_forecasts - realized[:, None]) ** 2, axis=0)
    baseline_msfe = None
    if baseline is not None:
        baseline = np.asarray(baseline, dtype=float)
        if baseline.shape != (n_rounds,):
            raise DimensionMismatchError("Baseline has shape {}, expected ({},)".format(baseline.shape, n_rounds))
        baseline_msfe = _msfe(baseline, realized)

    outcomes: Dict[Scheme, SchemeOutcome] = {}
    for c, state in enumerate(combiners):
        msfe = _msfe(forecasts[c], realized)
        outcomes[state.scheme] = SchemeOutcome(
            scheme=state.scheme,
            forecasts=forecasts[c],
            weights=weights[c],
            ledgers=ledgers[c],
            msfe=msfe,
            relative_msfe=msfe / baseline_msfe if baseline_msfe else None,
            final_state=combiners[c],
            clamped=clamped,
        )
        logger.debug("{}: msfe={:.6g} regret={:.4f}", state.scheme.value, msfe, running[c].cumulative_regret)
    if clamped:
        logger.warning("Clamped {} normalized losses above 1 during the online exercise", clamped)
    return OnlineExerciseResult(
        target_periods=targets,
        realized=realized,
        expert_forecasts=expert_forecasts,
        expert_msfe=expert_msfe,
        normalizer=normalizer,
        outcomes=outcomes,
        baseline_msfe=baseline_msfe,
    )
