"""Vectorized weight and regret trajectories for whole loss panels.

These reproduce the FTL and Hedge state machines round for round but work on
full T x K arrays, which keeps Monte Carlo replications cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from src.combiner.panel import LossPanel
from src.combiner.schemes import DEFAULT_C0


@dataclass(frozen=True)
class RegretPath:
    forecaster_cumloss: np.ndarray
    best_cumloss: np.ndarray
    regret: np.ndarray
    leader_changes: np.ndarray
    loss_range: np.ndarray

    @property
    def final_regret(self) -> float:
        return float(self.regret[-1]) if self.regret.size else 0.0


def leader_masks(panel: LossPanel) -> np.ndarray:
    """Boolean (T+1) x K matrix of argmin sets of the cumulative losses."""
    cumulative = panel.cumulative
    return cumulative == cumulative.min(axis=1, keepdims=True)


def ftl_weight_path(panel: LossPanel) -> np.ndarray:
    masks = leader_masks(panel)[:-1].astype(float)
    return masks / masks.sum(axis=1, keepdims=True)


def decreasing_rates(n_rounds: int, n_experts: int, c0: float = DEFAULT_C0) -> np.ndarray:
    return c0 * np.sqrt(math.log(n_experts) / np.arange(1, n_rounds + 1))


def hedge_weight_path(panel: LossPanel, rates: np.ndarray) -> np.ndarray:
    """Weights of Hedge with per-round ``rates`` (round t uses ``rates[t-1]`` and ``L_{t-1}``)."""
    previous = panel.cumulative[:-1]
    centered = previous - previous.min(axis=1, keepdims=True)
    raw = np.exp(-np.asarray(rates, dtype=float)[:, None] * centered)
    return raw / raw.sum(axis=1, keepdims=True)


def regret_path(panel: LossPanel, weights: np.ndarray) -> RegretPath:
    losses = panel.instantaneous
    forecaster = np.cumsum(np.einsum("tk,tk->t", weights, losses))
    best = panel.cumulative[1:].min(axis=1)
    masks = leader_masks(panel)
    changes = np.cumsum(np.any(masks[1:] != masks[:-1], axis=1))
    loss_range = losses.max(axis=1) - losses.min(axis=1) if losses.size else np.zeros(0)
    return RegretPath(
        forecaster_cumloss=forecaster,
        best_cumloss=best,
        regret=forecaster - best,
        leader_changes=changes,
        loss_range=loss_range,
    )


def ftl_tie_rounds(panel: LossPanel) -> int:
    """Rounds after the first whose FTL weights split over several leaders."""
    masks = leader_masks(panel)[1:-1]
    return int(np.count_nonzero(masks.sum(axis=1) > 1))
