"""Online expert-combination schemes as value-like state machines.

Every ``update_*`` function takes the state that produced the weights used
in the round just played plus that round's loss row, and returns a new state
whose ``weights`` are the ones to use in the next round. States are never
mutated in place, so independent combiners can share one loss panel across
threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, List, NamedTuple, Optional, Tuple, Union

import numpy as np

from src.combiner.ledger import RegretLedger, new_ledger, record_regret
from src.combiner.panel import LossPanel, clamp_losses, normalize_weights, uniform_weights
from src.errors import ConfigError, DimensionMismatchError, RateError

DEFAULT_C0 = 2.0
DEFAULT_ROLL_WINDOW = 4
DEFAULT_ROLL_EPSILON = 1e-6


class Scheme(str, Enum):
    SA = "SA"
    ROLL_MSE = "RollMSE"
    FTL = "FTL"
    HEDGE_CONSTANT = "HedgeConstant"
    HEDGE_DOUBLING = "HedgeDoubling"
    HEDGE_DECREASING = "HedgeDecreasing"
    ADAHEDGE = "AdaHedge"

    @property
    def slug(self) -> str:
        return self.value.lower()


HEDGE_SCHEMES = frozenset({Scheme.HEDGE_CONSTANT, Scheme.HEDGE_DOUBLING, Scheme.HEDGE_DECREASING})


@dataclass(frozen=True)
class RollMseMemory:
    window: int = DEFAULT_ROLL_WINDOW
    epsilon: float = DEFAULT_ROLL_EPSILON
    horizon: int = 1
    history: Tuple[np.ndarray, ...] = ()


@dataclass(frozen=True)
class ConstantHedgeMemory:
    eta: float
    recursive: bool = False


@dataclass(frozen=True)
class DoublingHedgeMemory:
    phase_cumulative: np.ndarray
    s_cap: float = 1.0
    phase: int = 1


@dataclass(frozen=True)
class DecreasingHedgeMemory:
    c0: float = DEFAULT_C0


@dataclass(frozen=True)
class AdaHedgeMemory:
    gap: float = 0.0
    mix_loss: float = 0.0
    eta: float = math.inf
    last_increment: float = 0.0


@dataclass(frozen=True)
class FtlMemory:
    leaders: Tuple[int, ...]


SchemeMemory = Union[
    None, RollMseMemory, ConstantHedgeMemory, DoublingHedgeMemory, DecreasingHedgeMemory, AdaHedgeMemory, FtlMemory
]


@dataclass(frozen=True)
class CombinerState:
    """Weights for the next round plus whatever the scheme remembers.

    ``round`` counts the loss rows already absorbed; ``cumulative`` holds the
    global cumulative expert losses (never reset, even by the doubling trick).
    """

    scheme: Scheme
    weights: np.ndarray
    round: int
    cumulative: np.ndarray
    memory: SchemeMemory = None
    clamped: int = 0

    @property
    def n_experts(self) -> int:
        return int(self.weights.shape[0])


class DoublingStep(NamedTuple):
    phase: int
    eta: float
    reset: bool


def hedge_weights(cumulative: np.ndarray, eta: float) -> np.ndarray:
    """Exponential weights ``exp(-eta * (L - min L))`` normalized onto the simplex.

    ``eta = inf`` gives the uniform distribution over the minimizers.
    """
    cumulative = np.asarray(cumulative, dtype=float)
    centered = cumulative - cumulative.min()
    if math.isinf(eta):
        raw = (centered == 0.0).astype(float)
    else:
        raw = np.exp(-eta * centered)
    return normalize_weights(raw)


def leader_set(cumulative: np.ndarray) -> Tuple[int, ...]:
    cumulative = np.asarray(cumulative, dtype=float)
    return tuple(int(k) for k in np.flatnonzero(cumulative == cumulative.min()))


def decreasing_rate(t: int, n_experts: int, c0: float = DEFAULT_C0) -> float:
    """Learning rate ``c0 * sqrt(log K / t)`` of decreasing Hedge.

    Raises:
        RateError: If ``t < 1``, ``K < 2`` or ``c0 <= 0``.
    """
    if t < 1:
        raise RateError("Round index must be >= 1, got {}".format(t))
    if n_experts < 2:
        raise RateError("Decreasing rate needs K >= 2 (log K > 0), got K={}".format(n_experts))
    if c0 <= 0:
        raise RateError("Rate scale c0 must be positive, got {}".format(c0))
    return c0 * math.sqrt(math.log(n_experts) / t)


def doubling_schedule(t: int, n_experts: int, s_cap: float = 1.0) -> DoublingStep:
    """Phase, rate and reset flag of the doubling trick at round ``t``.

    Phase r covers rounds ``[2**(r-1), 2**r - 1]`` and uses
    ``eta_r = sqrt(8 log K / (S**2 * 2**(r-1)))``.
    """
    if t < 1:
        raise RateError("Round index must be >= 1, got {}".format(t))
    if s_cap <= 0:
        raise RateError("Loss range cap must be positive, got {}".format(s_cap))
    phase = int(t).bit_length()
    phase_start = 1 << (phase - 1)
    eta = math.sqrt(8.0 * math.log(max(n_experts, 1)) / (s_cap**2 * phase_start))
    return DoublingStep(phase=phase, eta=eta, reset=t == phase_start)


def constant_rate(n_experts: int, horizon: int, s_cap: float = 1.0) -> float:
    """Worst-case optimal constant rate ``sqrt(8 log K / (S**2 T))``."""
    if horizon < 1:
        raise RateError("Planned horizon must be >= 1, got {}".format(horizon))
    if n_experts < 2:
        return 1.0
    return math.sqrt(8.0 * math.log(n_experts) / (s_cap**2 * horizon))


def init_state(
    scheme: Union[Scheme, str],
    n_experts: int,
    *,
    eta: Optional[float] = None,
    planned_rounds: Optional[int] = None,
    recursive: bool = False,
    c0: float = DEFAULT_C0,
    s_cap: float = 1.0,
    window: int = DEFAULT_ROLL_WINDOW,
    epsilon: float = DEFAULT_ROLL_EPSILON,
    horizon: int = 1,
) -> CombinerState:
    """Build the round-0 state of ``scheme`` for ``n_experts`` experts.

    Every scheme starts from uniform weights.

    Raises:
        RateError: For a nonpositive or underdetermined constant rate.
        ConfigError: For invalid rolling-window or rate-scale parameters.
    """
    scheme = Scheme(scheme)
    weights = uniform_weights(n_experts)
    cumulative = np.zeros(n_experts)
    memory: SchemeMemory = None
    if scheme is Scheme.FTL:
        memory = FtlMemory(leaders=tuple(range(n_experts)))
    elif scheme is Scheme.HEDGE_CONSTANT:
        if eta is None:
            if planned_rounds is None:
                raise RateError("Constant Hedge needs either eta or planned_rounds")
            eta = constant_rate(n_experts, planned_rounds, s_cap)
        if not eta > 0:
            raise RateError("Constant Hedge rate must be positive, got {}".format(eta))
        memory = ConstantHedgeMemory(eta=float(eta), recursive=recursive)
    elif scheme is Scheme.HEDGE_DOUBLING:
        if s_cap <= 0:
            raise RateError("Loss range cap must be positive, got {}".format(s_cap))
        memory = DoublingHedgeMemory(phase_cumulative=np.zeros(n_experts), s_cap=s_cap)
    elif scheme is Scheme.HEDGE_DECREASING:
        if c0 <= 0:
            raise ConfigError("Rate scale c0 must be positive, got {}".format(c0))
        memory = DecreasingHedgeMemory(c0=c0)
    elif scheme is Scheme.ADAHEDGE:
        memory = AdaHedgeMemory()
    elif scheme is Scheme.ROLL_MSE:
        if window < 1:
            raise ConfigError("Rolling window must be >= 1, got {}".format(window))
        if not epsilon > 0:
            raise ConfigError("Rolling MSE epsilon must be positive, got {}".format(epsilon))
        if horizon < 1:
            raise ConfigError("Forecast horizon must be >= 1, got {}".format(horizon))
        memory = RollMseMemory(window=window, epsilon=epsilon, horizon=horizon)
    return CombinerState(scheme=scheme, weights=weights, round=0, cumulative=cumulative, memory=memory)


def _absorb(state: CombinerState, new_loss_row: np.ndarray, expected: Scheme | frozenset) -> Tuple[np.ndarray, dict]:
    allowed = expected if isinstance(expected, frozenset) else frozenset({expected})
    if state.scheme not in allowed:
        raise ConfigError("State scheme {} cannot be updated by this rule".format(state.scheme.value))
    row = np.asarray(new_loss_row, dtype=float)
    if row.shape != (state.n_experts,):
        raise DimensionMismatchError("Loss row has shape {}, expected ({},)".format(row.shape, state.n_experts))
    row, n_clamped = clamp_losses(row)
    common = {
        "round": state.round + 1,
        "cumulative": state.cumulative + row,
        "clamped": state.clamped + n_clamped,
    }
    return row, common


def update_ftl(state: CombinerState, new_loss_row: np.ndarray) -> CombinerState:
    """Follow-the-Leader: uniform mass over the experts with minimal cumulative loss."""
    _, common = _absorb(state, new_loss_row, Scheme.FTL)
    leaders = leader_set(common["cumulative"])
    weights = np.zeros(state.n_experts)
    weights[list(leaders)] = 1.0 / len(leaders)
    return replace(state, weights=weights, memory=FtlMemory(leaders=leaders), **common)


def update_hedge(state: CombinerState, new_loss_row: np.ndarray) -> CombinerState:
    """Exponentially weighted average with constant, doubling or decreasing rate.

    Raises:
        RateError: If the scheme's rate for the next round is not positive.
    """
    row, common = _absorb(state, new_loss_row, HEDGE_SCHEMES)
    memory = state.memory
    n_experts = state.n_experts
    if n_experts == 1:
        return replace(state, **common)

    next_round = common["round"] + 1
    if state.scheme is Scheme.HEDGE_CONSTANT:
        eta = memory.eta
        if not eta > 0:
            raise RateError("Constant Hedge rate must be positive, got {}".format(eta))
        if memory.recursive:
            shifted = row - row.min()
            weights = normalize_weights(state.weights * np.exp(-eta * shifted))
        else:
            weights = hedge_weights(common["cumulative"], eta)
        return replace(state, weights=weights, **common)

    if state.scheme is Scheme.HEDGE_DECREASING:
        eta = decreasing_rate(next_round, n_experts, memory.c0)
        return replace(state, weights=hedge_weights(common["cumulative"], eta), **common)

    step_info = doubling_schedule(next_round, n_experts, memory.s_cap)
    phase_cumulative = memory.phase_cumulative + row
    if step_info.reset:
        phase_cumulative = np.zeros(n_experts)
    weights = hedge_weights(phase_cumulative, step_info.eta)
    memory = replace(memory, phase_cumulative=phase_cumulative, phase=step_info.phase)
    return replace(state, weights=weights, memory=memory, **common)


def mix_loss(weights: np.ndarray, loss_row: np.ndarray, eta: float) -> float:
    """``-1/eta * log(sum_k w_k exp(-eta l_k))``, the min over the support when eta is infinite."""
    if math.isinf(eta):
        return float(loss_row[weights > 0].min())
    shift = loss_row.min()
    return float(shift - math.log(np.dot(weights, np.exp(-eta * (loss_row - shift)))) / eta)


def update_adahedge(state: CombinerState, new_loss_row: np.ndarray) -> CombinerState:
    """AdaHedge: the rate ``log K / gap`` adapts to the cumulative mixability gap.

    The mix loss of the round is evaluated at the rate that produced the
    round's weights; its difference to the forecaster's loss is clamped at zero
    before it is added to the gap.
    """
    row, common = _absorb(state, new_loss_row, Scheme.ADAHEDGE)
    memory: AdaHedgeMemory = state.memory
    forecaster_loss = float(np.dot(state.weights, row))
    mixed = mix_loss(state.weights, row, memory.eta)
    increment = forecaster_loss - mixed
    gap = memory.gap + max(0.0, increment)
    if gap == 0.0:
        eta = math.inf
    else:
        eta = math.log(state.n_experts) / gap
    weights = hedge_weights(common["cumulative"], eta)
    memory = AdaHedgeMemory(gap=gap, mix_loss=memory.mix_loss + mixed, eta=eta, last_increment=increment)
    return replace(state, weights=weights, memory=memory, **common)


def update_rollmse(state: CombinerState, new_loss_row: np.ndarray) -> CombinerState:
    """Inverse rolling-MSE weights over the last ``r`` realized loss rows.

    With forecast horizon h only rounds ``tau <= t - h`` are realized when
    weighting round t; until one such row exists the weights stay uniform.
    """
    row, common = _absorb(state, new_loss_row, Scheme.ROLL_MSE)
    memory: RollMseMemory = state.memory
    keep = memory.window + memory.horizon - 1
    history = (memory.history + (row,))[-keep:]
    next_round = common["round"] + 1
    effective = min(memory.window, max(0, next_round - memory.horizon))
    memory = replace(memory, history=history)
    if effective == 0:
        return replace(state, weights=uniform_weights(state.n_experts), memory=memory, **common)
    end = len(history) - (memory.horizon - 1)
    window_rows = np.vstack(history[end - effective : end])
    mse = window_rows.mean(axis=0)
    weights = normalize_weights(1.0 / (mse + memory.epsilon))
    return replace(state, weights=weights, memory=memory, **common)


def update_simple_average(state: CombinerState, new_loss_row: Optional[np.ndarray] = None) -> CombinerState:
    """Equal weights every round; a loss row, if given, only advances the bookkeeping."""
    if state.scheme is not Scheme.SA:
        raise ConfigError("State scheme {} cannot be updated by this rule".format(state.scheme.value))
    if new_loss_row is None:
        return replace(state, weights=uniform_weights(state.n_experts))
    _, common = _absorb(state, new_loss_row, Scheme.SA)
    return replace(state, weights=uniform_weights(state.n_experts), **common)


def advance(state: CombinerState, new_loss_row: np.ndarray) -> CombinerState:
    if state.scheme is Scheme.FTL:
        return update_ftl(state, new_loss_row)
    if state.scheme in HEDGE_SCHEMES:
        return update_hedge(state, new_loss_row)
    if state.scheme is Scheme.ADAHEDGE:
        return update_adahedge(state, new_loss_row)
    if state.scheme is Scheme.ROLL_MSE:
        return update_rollmse(state, new_loss_row)
    return update_simple_average(state, new_loss_row)


@dataclass
class SchemeRun:
    """Replay of a loss panel: ``weights[t-1]`` is the vector used in round t."""

    weights: np.ndarray
    ledgers: List[RegretLedger]
    final_state: CombinerState
    states: List[CombinerState] = field(default_factory=list)

    @property
    def ledger(self) -> RegretLedger:
        return self.ledgers[-1]


def run_scheme(panel: LossPanel, scheme: Union[Scheme, str], keep_states: bool = False, **params: Any) -> SchemeRun:
    state = init_state(scheme, panel.n_experts, **params)
    ledger = new_ledger(panel.n_experts)
    weights = np.empty((panel.n_rounds, panel.n_experts))
    ledgers: List[RegretLedger] = []
    states: List[CombinerState] = [state] if keep_states else []
    for index, row in enumerate(panel.instantaneous):
        weights[index] = state.weights
        ledger = record_regret(ledger, state.weights, row)
        ledgers.append(ledger)
        state = advance(state, row)
        if keep_states:
            states.append(state)
    return SchemeRun(weights=weights, ledgers=ledgers, final_state=state, states=states)
