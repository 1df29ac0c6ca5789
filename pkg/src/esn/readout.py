"""Ridge readout with centering and expanding-window cross-validation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, Sequence

import numpy as np
from loguru import logger
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from src.errors import ConfigError, DimensionMismatchError, InsufficientDataError, RankDeficiencyError

DEFAULT_LAMBDA_GRID = tuple(float(value) for value in np.logspace(-6, 3, 13))
DEFAULT_FOLDS = 5
MIN_VALIDATION_BLOCK = 4
MIN_TRAIN_ROWS = 2


@dataclass(frozen=True)
class ReadoutCoefficients:
    intercept: float
    weights: np.ndarray
    lam: float

    def predict(self, states: np.ndarray) -> np.ndarray:
        return self.intercept + np.asarray(states, dtype=float) @ self.weights

    def to_dict(self) -> Dict[str, Any]:
        return {"intercept": self.intercept, "lambda": self.lam, "weights": [float(w) for w in self.weights]}


@dataclass(frozen=True)
class FoldSpec:
    n_folds: int = DEFAULT_FOLDS
    block: int | None = None

    def block_size(self, n_rows: int) -> int:
        return self.block if self.block is not None else max(MIN_VALIDATION_BLOCK, n_rows // 10)


def _check_design(states: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    states = np.asarray(states, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if states.ndim != 2 or targets.ndim != 1 or states.shape[0] != targets.shape[0]:
        raise DimensionMismatchError(
            "States {} and targets {} do not line up".format(states.shape, targets.shape)
        )
    return states, targets


def fit_ridge(states: np.ndarray, targets: np.ndarray, lam: float) -> ReadoutCoefficients:
    """Centered ridge regression of ``targets`` on ``states``.

    Solves ``(Xc'Xc + lam I) W = Xc'yc`` through a Cholesky factorization and
    recovers the intercept as ``mean(y - X W)``.

    Raises:
        InsufficientDataError: With fewer than two rows.
        RankDeficiencyError: If ``lam = 0`` and the centered design is rank deficient.
    """
    states, targets = _check_design(states, targets)
    if states.shape[0] < MIN_TRAIN_ROWS:
        raise InsufficientDataError("Ridge fit needs at least {} rows, got {}".format(MIN_TRAIN_ROWS, states.shape[0]))
    if not lam >= 0.0:
        raise ConfigError("Ridge penalty must be >= 0, got {}".format(lam))

    state_mean = states.mean(axis=0)
    centered = states - state_mean
    centered_targets = targets - targets.mean()
    gram = centered.T @ centered
    if lam == 0.0 and np.linalg.matrix_rank(centered) < states.shape[1]:
        raise RankDeficiencyError("Centered design of shape {} is rank deficient at lambda=0".format(states.shape))
    gram[np.diag_indices_from(gram)] += lam
    try:
        factor = cho_factor(gram, lower=True, check_finite=True)
    except LinAlgError as exc:
        raise RankDeficiencyError("Normal equations are not positive definite: {}".format(exc)) from exc
    weights = cho_solve(factor, centered.T @ centered_targets)
    intercept = float(np.mean(targets - states @ weights))
    return ReadoutCoefficients(intercept=intercept, weights=weights, lam=float(lam))


def expanding_folds(n_rows: int, folds: FoldSpec) -> list[tuple[int, int]]:
    """``(train_end, valid_end)`` pairs; fold i trains on ``[0, train_end)``."""
    block = folds.block_size(n_rows)
    first_train = n_rows - folds.n_folds * block
    if folds.n_folds < 1 or first_train < MIN_TRAIN_ROWS:
        raise InsufficientDataError(
            "{} rows cannot hold {} validation blocks of {} rows plus {} training rows".format(
                n_rows, folds.n_folds, block, MIN_TRAIN_ROWS
            )
        )
    return [(first_train + i * block, first_train + (i + 1) * block) for i in range(folds.n_folds)]


def select_lambda(
    states: np.ndarray,
    targets: np.ndarray,
    grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
    folds: FoldSpec | None = None,
) -> float:
    """Pick the penalty with the smallest mean validation error.

    Each fold fits on an initial segment and validates on the next block.
    Ties go to the smallest penalty. Penalties whose fits are singular in
    some fold are skipped.

    Raises:
        ConfigError: If the grid is empty or not ascending.
        InsufficientDataError: If the rows cannot hold the folds.
        RankDeficiencyError: If every penalty in the grid is singular on some fold.
    """
    grid = [float(value) for value in grid]
    if not grid:
        raise ConfigError("Lambda grid is empty")
    if any(later <= earlier for earlier, later in zip(grid, grid[1:])):
        raise ConfigError("Lambda grid must be strictly ascending: {}".format(grid))
    if len(grid) == 1:
        return grid[0]
    states, targets = _check_design(states, targets)
    splits = expanding_folds(states.shape[0], folds or FoldSpec())

    best_lam, best_score = grid[0], np.inf
    for lam in grid:
        errors = []
        try:
            for train_end, valid_end in splits:
                coef = fit_ridge(states[:train_end], targets[:train_end], lam)
                residual = targets[train_end:valid_end] - coef.predict(states[train_end:valid_end])
                errors.append(np.mean(residual**2))
        except RankDeficiencyError:
            logger.debug("Skipping lambda={} (singular fold)", lam)
            continue
        score = float(np.mean(errors))
        if score < best_score:
            best_lam, best_score = lam, score
    if not np.isfinite(best_score):
        raise RankDeficiencyError("Every lambda in {} gave a singular fit on some fold".format(grid))
    logger.debug("Selected lambda={} (cv mse={:.6g})", best_lam, best_score)
    return best_lam
