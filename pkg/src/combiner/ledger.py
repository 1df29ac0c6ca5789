"""Regret bookkeeping and CSV-ready frames for combiner runs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np
import pandas as pd

from src.combiner.panel import clamp_losses, validate_weights
from src.errors import DimensionMismatchError

REGRET_COLUMNS = ("round", "forecaster_cumloss", "best_cumloss", "regret", "leader_changes")
WEIGHT_COLUMNS = ("round", "expert_id", "weight")


@dataclass(frozen=True)
class RegretLedger:
    """Running totals of one forecaster against the best expert in hindsight.

    ``leaders`` is the argmin set of ``expert_cumloss``; before any round it
    is the full expert set because every cumulative loss is zero.
    """

    round: int
    forecaster_cumloss: float
    expert_cumloss: np.ndarray
    best_cumloss: float
    cumulative_regret: float
    leader_changes: int
    max_loss_range: float
    sum_sq_range: float
    leaders: Tuple[int, ...]

    @property
    def n_experts(self) -> int:
        return int(self.expert_cumloss.shape[0])


def new_ledger(n_experts: int) -> RegretLedger:
    return RegretLedger(
        round=0,
        forecaster_cumloss=0.0,
        expert_cumloss=np.zeros(n_experts),
        best_cumloss=0.0,
        cumulative_regret=0.0,
        leader_changes=0,
        max_loss_range=0.0,
        sum_sq_range=0.0,
        leaders=tuple(range(n_experts)),
    )


def record_regret(ledger: RegretLedger, weights: np.ndarray, loss_row: np.ndarray) -> RegretLedger:
    """Account for one round played with ``weights`` against ``loss_row``.

    A leader change is counted whenever the argmin set after the round differs
    from the set before it. A fresh ledger starts with every expert leading, so
    the first round counts as a change unless all experts stay tied.
    """
    weights = validate_weights(weights, ledger.n_experts)
    row = np.asarray(loss_row, dtype=float)
    if row.shape != (ledger.n_experts,):
        raise DimensionMismatchError("Loss row has shape {}, expected ({},)".format(row.shape, ledger.n_experts))
    row, _ = clamp_losses(row)

    forecaster_cumloss = ledger.forecaster_cumloss + float(np.dot(weights, row))
    expert_cumloss = ledger.expert_cumloss + row
    best_cumloss = float(expert_cumloss.min())
    leaders = tuple(int(k) for k in np.flatnonzero(expert_cumloss == best_cumloss))
    loss_range = float(row.max() - row.min())
    return RegretLedger(
        round=ledger.round + 1,
        forecaster_cumloss=forecaster_cumloss,
        expert_cumloss=expert_cumloss,
        best_cumloss=best_cumloss,
        cumulative_regret=forecaster_cumloss - best_cumloss,
        leader_changes=ledger.leader_changes + int(leaders != ledger.leaders),
        max_loss_range=max(ledger.max_loss_range, loss_range),
        sum_sq_range=ledger.sum_sq_range + loss_range**2,
        leaders=leaders,
    )


def regret_frame(ledgers: Iterable[RegretLedger]) -> pd.DataFrame:
    rows = [
        (ledger.round, ledger.forecaster_cumloss, ledger.best_cumloss, ledger.cumulative_regret, ledger.leader_changes)
        for ledger in ledgers
    ]
    return pd.DataFrame(rows, columns=list(REGRET_COLUMNS))


def weights_frame(weights: np.ndarray, expert_ids: Sequence[int] | None = None) -> pd.DataFrame:
    """Long-format weight trajectory, one row per (round, expert)."""
    weights = np.asarray(weights, dtype=float)
    n_rounds, n_experts = weights.shape
    ids = np.asarray(expert_ids if expert_ids is not None else np.arange(n_experts))
    return pd.DataFrame(
        {
            "round": np.repeat(np.arange(1, n_rounds + 1), n_experts),
            "expert_id": np.tile(ids, n_rounds),
            "weight": weights.reshape(-1),
        },
        columns=list(WEIGHT_COLUMNS),
    )
