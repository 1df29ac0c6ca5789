from __future__ import annotations

import numpy as np
import pytest

from src.errors import ConfigError, InsufficientDataError, RankDeficiencyError
from src.esn.readout import FoldSpec, expanding_folds, fit_ridge, select_lambda


def _oracle(states: np.ndarray, targets: np.ndarray, lam: float) -> tuple[float, np.ndarray]:
    n_rows = states.shape[0]
    projector = np.eye(n_rows) - np.ones((n_rows, n_rows)) / n_rows
    centered, centered_targets = projector @ states, projector @ targets
    system = centered.T @ centered + lam * np.eye(states.shape[1])
    weights = np.linalg.pinv(system) @ centered.T @ centered_targets
    return float(np.mean(targets - states @ weights)), weights


def test_scalar_ridge_example() -> None:
    coef = fit_ridge(np.array([[1.0], [-1.0]]), np.array([1.0, -1.0]), 1.0)
    assert coef.weights[0] == pytest.approx(2.0 / 3.0, abs=1e-14)
    assert coef.intercept == pytest.approx(0.0, abs=1e-14)


def test_heavy_penalty_shrinks_to_the_mean() -> None:
    rng = np.random.default_rng(0)
    states, targets = rng.normal(size=(30, 4)), rng.normal(size=30) + 3.0
    coef = fit_ridge(states, targets, 1e12)
    assert np.max(np.abs(coef.weights)) < 1e-9
    assert coef.intercept == pytest.approx(targets.mean() - states.mean(axis=0) @ coef.weights)
    assert coef.intercept == pytest.approx(targets.mean(), abs=1e-8)


def test_zero_penalty_equals_least_squares() -> None:
    rng = np.random.default_rng(1)
    states, targets = rng.normal(size=(5, 2)), rng.normal(size=5)
    coef = fit_ridge(states, targets, 0.0)
    design = np.column_stack([np.ones(5), states])
    solution = np.linalg.pinv(design) @ targets
    assert coef.intercept == pytest.approx(solution[0], abs=1e-10)
    assert np.allclose(coef.weights, solution[1:], atol=1e-10)


def test_ridge_matches_normal_equation_oracle_on_random_instances() -> None:
    rng = np.random.default_rng(2024)
    for index in range(100):
        dim = int(rng.integers(1, 11))
        n_rows = int(rng.integers(dim + 2, 51))
        lam = (0.0, 1.0, 100.0)[index % 3]
        states, targets = rng.normal(size=(n_rows, dim)), rng.normal(size=n_rows)
        coef = fit_ridge(states, targets, lam)
        intercept, weights = _oracle(states, targets, lam)
        assert np.allclose(coef.weights, weights, rtol=1e-8, atol=1e-10)
        assert coef.intercept == pytest.approx(intercept, rel=1e-8, abs=1e-10)


def test_shrinkage_identity_and_monotone_norm() -> None:
    rng = np.random.default_rng(3)
    states, targets = rng.normal(size=(40, 6)), rng.normal(size=40)
    centered, centered_targets = states - states.mean(axis=0), targets - targets.mean()
    norms = []
    for lam in (0.0, 0.1, 1.0, 10.0, 100.0):
        coef = fit_ridge(states, targets, lam)
        lhs = centered.T @ (centered_targets - centered @ coef.weights)
        assert np.allclose(lhs, lam * coef.weights, rtol=1e-8, atol=1e-10)
        assert coef.predict(states.mean(axis=0)[None, :])[0] == pytest.approx(targets.mean(), abs=1e-12)
        norms.append(float(np.linalg.norm(coef.weights)))
    assert all(later <= earlier + 1e-15 for earlier, later in zip(norms, norms[1:]))


def test_zero_penalty_on_rank_deficient_design_raises() -> None:
    column = np.arange(6, dtype=float)
    states = np.column_stack([column, 2.0 * column])
    with pytest.raises(RankDeficiencyError):
        fit_ridge(states, column, 0.0)


def test_select_lambda_examples() -> None:
    rng = np.random.default_rng(7)
    states = rng.normal(size=(60, 5))
    assert select_lambda(states, rng.normal(size=60), grid=[0.5]) == 0.5

    wide = rng.normal(size=(60, 20))
    assert select_lambda(wide, rng.normal(size=60), grid=[1e-4, 1e4]) == 1e4

    linear = states @ np.array([1.0, -2.0, 0.5, 3.0, 0.0]) + 0.7
    assert select_lambda(states, linear, grid=[1e-8, 1e4]) == 1e-8


def test_select_lambda_rejects_bad_grids_and_short_samples() -> None:
    states = np.random.default_rng(0).normal(size=(12, 2))
    targets = states[:, 0]
    with pytest.raises(ConfigError):
        select_lambda(states, targets, grid=[])
    with pytest.raises(ConfigError):
        select_lambda(states, targets, grid=[1.0, 0.1])
    with pytest.raises(InsufficientDataError):
        select_lambda(states, targets, grid=[0.1, 1.0], folds=FoldSpec(n_folds=5))


def test_select_lambda_refuses_a_grid_that_is_singular_everywhere(monkeypatch) -> None:
    def singular(*args, **kwargs):
        raise RankDeficiencyError("singular")

    monkeypatch.setattr("src.esn.readout.fit_ridge", singular)
    states = np.random.default_rng(1).normal(size=(60, 3))
    with pytest.raises(RankDeficiencyError, match=r"\[0\.0, 1\.0\]"):
        select_lambda(states, states[:, 0], grid=[0.0, 1.0])


def test_expanding_folds_are_contiguous_blocks() -> None:
    folds = expanding_folds(60, FoldSpec())
    assert folds == [(30, 36), (36, 42), (42, 48), (48, 54), (54, 60)]
