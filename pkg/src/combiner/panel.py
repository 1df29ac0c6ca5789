"""Loss panels, simplex weights and forecast combination."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from loguru import logger

from src.errors import DimensionMismatchError, NonFiniteInputError, SimplexError

SIMPLEX_TOL = 1e-12


def uniform_weights(n_experts: int) -> np.ndarray:
    if n_experts < 1:
        raise DimensionMismatchError("Need at least one expert, got {}".format(n_experts))
    return np.full(n_experts, 1.0 / n_experts)


def normalize_weights(raw: np.ndarray) -> np.ndarray:
    """Scale a nonnegative vector onto the simplex."""
    raw = np.asarray(raw, dtype=float)
    total = raw.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise SimplexError("Cannot normalize weights with total {}".format(total))
    return raw / total


def validate_weights(weights: np.ndarray, n_experts: int | None = None, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Check that ``weights`` is a probability vector and return it as an array.

    Raises:
        DimensionMismatchError: If the length does not match ``n_experts``.
        SimplexError: If an entry is negative or the entries do not sum to one.
    """
    weights = np.asarray(weights, dtype=float)
    if weights.ndim != 1:
        raise DimensionMismatchError("Weights must be a vector, got shape {}".format(weights.shape))
    if n_experts is not None and weights.shape[0] != n_experts:
        raise DimensionMismatchError("Expected {} weights, got {}".format(n_experts, weights.shape[0]))
    if not np.all(np.isfinite(weights)):
        raise SimplexError("Weights contain non-finite entries")
    if np.any(weights < 0.0):
        raise SimplexError("Weights contain negative entries: min={}".format(weights.min()))
    total = weights.sum()
    if abs(total - 1.0) > tol:
        raise SimplexError("Weights sum to {!r}, not 1".format(total))
    return weights


def clamp_losses(row: np.ndarray) -> Tuple[np.ndarray, int]:
    """Clamp a loss row into [0, 1] and report how many entries moved."""
    row = np.asarray(row, dtype=float)
    if not np.all(np.isfinite(row)):
        raise NonFiniteInputError("Loss row contains non-finite values")
    clamped = np.clip(row, 0.0, 1.0)
    n_clamped = int(np.count_nonzero(clamped != row))
    if n_clamped:
        logger.debug("Clamped {} loss entries into [0, 1]", n_clamped)
    return clamped, n_clamped


def combine_forecasts(weights: np.ndarray, expert_forecasts: np.ndarray) -> float:
    """Return the convex combination ``sum_k w_k * f_k``.

    Raises:
        DimensionMismatchError: If the vectors have different lengths.
        NonFiniteInputError: If a forecast is NaN or infinite.
    """
    forecasts = np.asarray(expert_forecasts, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if forecasts.ndim != 1 or forecasts.shape != weights.shape:
        raise DimensionMismatchError(
            "Weights have shape {} but forecasts have shape {}".format(weights.shape, forecasts.shape)
        )
    validate_weights(weights)
    if not np.all(np.isfinite(forecasts)):
        raise NonFiniteInputError("Expert forecasts contain non-finite values")
    return float(np.dot(weights, forecasts))


@dataclass(frozen=True)
class LossPanel:
    """Per-round expert losses and their running sums.

    ``instantaneous`` has one row per round (round t is row t-1) and
    ``cumulative`` has T+1 rows with an all-zero row 0, so
    ``cumulative[t] == cumulative[t-1] + instantaneous[t-1]`` holds exactly.
    """

    instantaneous: np.ndarray
    cumulative: np.ndarray
    clamped: int = 0

    @property
    def n_experts(self) -> int:
        return int(self.instantaneous.shape[1])

    @property
    def n_rounds(self) -> int:
        return int(self.instantaneous.shape[0])

    @classmethod
    def from_losses(cls, losses: np.ndarray, n_experts: int | None = None) -> "LossPanel":
        losses = np.asarray(losses, dtype=float)
        if losses.ndim == 1 and losses.size == 0 and n_experts is not None:
            losses = losses.reshape(0, n_experts)
        if losses.ndim != 2 or losses.shape[1] < 1:
            raise DimensionMismatchError("Loss panel must be T x K with K >= 1, got {}".format(losses.shape))
        if not np.all(np.isfinite(losses)):
            raise NonFiniteInputError("Loss panel contains non-finite values")
        clipped = np.clip(losses, 0.0, 1.0)
        n_clamped = int(np.count_nonzero(clipped != losses))
        if n_clamped:
            logger.warning("Clamped {} panel entries into [0, 1]", n_clamped)
        cumulative = np.zeros((clipped.shape[0] + 1, clipped.shape[1]))
        # np.add.accumulate runs strictly left to right along the time axis
        np.cumsum(clipped, axis=0, out=cumulative[1:])
        clipped.setflags(write=False)
        cumulative.setflags(write=False)
        return cls(instantaneous=clipped, cumulative=cumulative, clamped=n_clamped)

    def prefix(self, n_rounds: int) -> "LossPanel":
        return LossPanel(
            instantaneous=self.instantaneous[:n_rounds],
            cumulative=self.cumulative[: n_rounds + 1],
            clamped=self.clamped,
        )
