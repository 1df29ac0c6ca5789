from __future__ import annotations

import math

import numpy as np
import pytest

from src.combiner.ledger import new_ledger, record_regret, regret_frame, weights_frame
from src.combiner.panel import LossPanel, combine_forecasts, validate_weights
from src.combiner.paths import decreasing_rates, ftl_weight_path, hedge_weight_path, regret_path
from src.combiner.schemes import (
    Scheme,
    advance,
    constant_rate,
    decreasing_rate,
    doubling_schedule,
    hedge_weights,
    init_state,
    run_scheme,
    update_adahedge,
    update_ftl,
    update_hedge,
    update_rollmse,
    update_simple_average,
)
from src.errors import ConfigError, DimensionMismatchError, RateError, SimplexError

ALL_SCHEMES = [
    ("SA", {}),
    ("RollMSE", {}),
    ("FTL", {}),
    ("HedgeConstant", {"eta": 0.7}),
    ("HedgeDoubling", {}),
    ("HedgeDecreasing", {}),
    ("AdaHedge", {}),
]


def _feed(state, rows):
    for row in rows:
        state = advance(state, np.asarray(row, dtype=float))
    return state


def test_combine_forecasts_examples() -> None:
    assert combine_forecasts(np.array([0.5, 0.5]), np.array([2.0, 4.0])) == 3.0
    assert combine_forecasts(np.array([1.0, 0.0, 0.0]), np.array([7.0, -1.0, 5.0])) == 7.0
    weights, forecasts = np.array([0.2, 0.3, 0.5]), np.array([1.0, 2.0, 3.0])
    assert combine_forecasts(weights, forecasts) == pytest.approx(sum(w * f for w, f in zip(weights, forecasts)))


def test_combine_forecasts_rejects_mismatched_lengths() -> None:
    with pytest.raises(DimensionMismatchError):
        combine_forecasts(np.array([0.5, 0.5]), np.array([1.0, 2.0, 3.0]))


def test_validate_weights_rejects_off_simplex_vectors() -> None:
    with pytest.raises(SimplexError):
        validate_weights(np.array([0.6, 0.6]))
    with pytest.raises(SimplexError):
        validate_weights(np.array([1.2, -0.2]))


def test_loss_panel_cumulative_rows_are_exact_running_sums() -> None:
    rng = np.random.default_rng(3)
    panel = LossPanel.from_losses(rng.random((40, 4)))
    assert np.all(panel.cumulative[0] == 0.0)
    for t in range(1, panel.n_rounds + 1):
        assert np.array_equal(panel.cumulative[t], panel.cumulative[t - 1] + panel.instantaneous[t - 1])


def test_loss_panel_clamps_out_of_range_losses() -> None:
    panel = LossPanel.from_losses(np.array([[1.5, -0.2], [0.3, 0.4]]))
    assert panel.clamped == 2
    assert panel.instantaneous.min() >= 0.0 and panel.instantaneous.max() <= 1.0


def test_ftl_weights_follow_unique_and_tied_leaders() -> None:
    state = update_ftl(init_state("FTL", 3), np.array([1.0, 0.0, 1.0]))
    state = update_ftl(state, np.array([1.0, 0.5, 0.0]))
    state = update_ftl(state, np.array([1.0, 0.5, 1.0]))
    assert state.cumulative.tolist() == [3.0, 1.0, 2.0]
    assert state.weights.tolist() == [0.0, 1.0, 0.0]

    tied = update_ftl(init_state("FTL", 3), np.array([1.0, 1.0, 1.0]))
    tied = update_ftl(tied, np.array([1.0, 1.0, 1.0]))
    tied = update_ftl(tied, np.array([0.0, 0.0, 1.0]))
    tied = update_ftl(tied, np.array([0.0, 0.0, 1.0]))
    tied = update_ftl(tied, np.array([0.0, 0.0, 1.0]))
    assert tied.cumulative.tolist() == [2.0, 2.0, 5.0]
    assert tied.weights.tolist() == [0.5, 0.5, 0.0]


def test_ftl_two_expert_trace_matches_cumulative_argmin() -> None:
    rows = np.array([[0.2, 0.8], [0.9, 0.1], [0.9, 0.1]])
    run = run_scheme(LossPanel.from_losses(rows), Scheme.FTL, keep_states=True)

    cumulative = np.cumsum(rows, axis=0)
    expected_leaders = [tuple(np.flatnonzero(row == row.min())) for row in cumulative]
    assert expected_leaders == [(0,), (1,), (1,)]
    assert [state.memory.leaders for state in run.states[1:]] == expected_leaders
    assert np.allclose(run.weights[0], [0.5, 0.5])
    assert run.final_state.weights.tolist() == [0.0, 1.0]
    # the initial all-expert set counts as a leader set, so {0,1} -> {0} -> {1}
    assert run.ledger.leader_changes == 2


def test_first_round_counts_as_a_leader_change_unless_everyone_stays_tied() -> None:
    split = record_regret(new_ledger(3), np.full(3, 1.0 / 3.0), np.array([0.1, 0.5, 0.5]))
    assert (split.leaders, split.leader_changes) == ((0,), 1)
    level = record_regret(new_ledger(3), np.full(3, 1.0 / 3.0), np.full(3, 0.4))
    assert (level.leaders, level.leader_changes) == ((0, 1, 2), 0)


def test_hedge_weights_examples() -> None:
    assert np.allclose(hedge_weights(np.array([0.0, math.log(2.0)]), 1.0), [2.0 / 3.0, 1.0 / 3.0], atol=1e-12)
    assert np.allclose(hedge_weights(np.full(6, 3.7), 0.9), np.full(6, 1.0 / 6.0), atol=1e-15)
    assert hedge_weights(np.array([1.0, 0.0, 2.0]), 50.0)[1] > 1.0 - 1e-10


def test_hedge_weights_are_shift_invariant_and_approach_ftl() -> None:
    rng = np.random.default_rng(11)
    cumulative = rng.random(7) * 5
    assert np.allclose(hedge_weights(cumulative, 1.3), hedge_weights(cumulative + 123.0, 1.3), atol=1e-12)

    integer_gaps = np.array([2.0, 1.0, 1.0, 4.0])
    assert np.allclose(hedge_weights(integer_gaps, 1e3), [0.0, 0.5, 0.5, 0.0], atol=1e-9)


def test_update_hedge_rejects_nonpositive_rate() -> None:
    with pytest.raises(RateError):
        init_state("HedgeConstant", 3, eta=0.0)
    with pytest.raises(RateError):
        init_state("HedgeConstant", 3)


def test_constant_hedge_recursion_agrees_with_batch_form() -> None:
    rng = np.random.default_rng(5)
    for n_rounds, n_experts in [(100, 20), (37, 3), (64, 9)]:
        panel = LossPanel.from_losses(rng.random((n_rounds, n_experts)))
        batch = run_scheme(panel, Scheme.HEDGE_CONSTANT, eta=0.8)
        recursive = run_scheme(panel, Scheme.HEDGE_CONSTANT, eta=0.8, recursive=True)
        assert np.allclose(batch.weights, recursive.weights, atol=1e-10)


def test_decreasing_rate_examples() -> None:
    assert decreasing_rate(4, 3) == pytest.approx(math.sqrt(math.log(3)), rel=1e-12)
    assert decreasing_rate(4, 3) == pytest.approx(1.04815, abs=1e-5)
    assert decreasing_rate(16, 3) == pytest.approx(decreasing_rate(4, 3) / 2.0, rel=1e-12)
    assert decreasing_rate(4, 3) == decreasing_rate(4, 3, c0=2.0)
    with pytest.raises(RateError):
        decreasing_rate(4, 1)


def test_doubling_schedule_examples() -> None:
    assert doubling_schedule(1, 3).phase == 1 and doubling_schedule(1, 3).reset
    assert doubling_schedule(4, 3).phase == 3 and doubling_schedule(4, 3).reset
    assert doubling_schedule(5, 3).phase == 3 and not doubling_schedule(5, 3).reset
    assert doubling_schedule(1, 3, s_cap=1.0).eta == pytest.approx(math.sqrt(8 * math.log(3)), rel=1e-12)
    assert doubling_schedule(1, 3).eta == pytest.approx(2.9645, abs=1e-4)
    for t in range(1, 70):
        step = doubling_schedule(t, 3)
        assert 2 ** (step.phase - 1) <= t <= 2**step.phase - 1


def test_doubling_hedge_resets_phase_losses_but_keeps_global_cumulative() -> None:
    state = init_state("HedgeDoubling", 2)
    state = update_hedge(state, np.array([1.0, 0.0]))
    assert np.allclose(state.weights, [0.5, 0.5])
    assert state.cumulative.tolist() == [1.0, 0.0]
    state = update_hedge(state, np.array([1.0, 0.0]))
    assert state.weights[1] > state.weights[0]


def test_constant_rate_default() -> None:
    assert constant_rate(10, 400) == pytest.approx(math.sqrt(8 * math.log(10) / 400))


def _adahedge_oracle(rows: np.ndarray):
    """Step-by-step AdaHedge with the mix loss taken at the round's own rate."""
    n_experts = rows.shape[1]
    cumulative = np.zeros(n_experts)
    gap, eta = 0.0, math.inf
    trace = []
    for row in rows:
        if math.isinf(eta):
            weights = (cumulative == cumulative.min()).astype(float)
        else:
            weights = np.exp(-eta * (cumulative - cumulative.min()))
        weights = weights / weights.sum()
        forecaster = float(weights @ row)
        if math.isinf(eta):
            mixed = float(row[weights > 0].min())
        else:
            mixed = -math.log(float(weights @ np.exp(-eta * row))) / eta
        gap += max(0.0, forecaster - mixed)
        cumulative = cumulative + row
        eta = math.log(n_experts) / gap if gap > 0 else math.inf
        trace.append((weights, gap, eta))
    return trace


def test_adahedge_two_round_trace_matches_oracle() -> None:
    rows = np.array([[0.0, 1.0], [1.0, 0.0]])
    run = run_scheme(LossPanel.from_losses(rows), Scheme.ADAHEDGE, keep_states=True)
    oracle = _adahedge_oracle(rows)

    assert np.allclose(run.weights[0], [0.5, 0.5])
    for t, (weights, gap, eta) in enumerate(oracle):
        assert np.allclose(run.weights[t], weights, atol=1e-12)
        assert run.states[t + 1].memory.gap == pytest.approx(gap, abs=1e-12)
        assert run.states[t + 1].memory.eta == pytest.approx(eta, rel=1e-12)
    assert oracle[0][1] == pytest.approx(0.5)
    assert oracle[0][2] == pytest.approx(2.0 * math.log(2.0))
    assert np.allclose(run.weights[1], [0.8, 0.2])


def test_adahedge_gap_is_monotone_and_increments_respect_jensen() -> None:
    rng = np.random.default_rng(21)
    panel = LossPanel.from_losses(rng.random((300, 6)))
    run = run_scheme(panel, Scheme.ADAHEDGE, keep_states=True)
    gaps = [state.memory.gap for state in run.states]
    assert all(later >= earlier for earlier, later in zip(gaps, gaps[1:]))
    assert min(state.memory.last_increment for state in run.states[1:]) >= -1e-12


def test_adahedge_mix_loss_decomposes_regret() -> None:
    rng = np.random.default_rng(8)
    panel = LossPanel.from_losses(rng.random((120, 4)))
    run = run_scheme(panel, Scheme.ADAHEDGE, keep_states=True)
    final = run.final_state.memory
    best = panel.cumulative[-1].min()
    increments = [state.memory.last_increment for state in run.states[1:]]
    assert run.ledger.cumulative_regret == pytest.approx(final.mix_loss - best + sum(increments), abs=1e-9)


def test_rollmse_examples() -> None:
    state = update_rollmse(init_state("RollMSE", 2, window=1, epsilon=1.0), np.array([0.0, 1.0]))
    assert np.allclose(state.weights, [2.0 / 3.0, 1.0 / 3.0], atol=1e-12)

    delayed = update_rollmse(init_state("RollMSE", 2, horizon=2), np.array([0.0, 1.0]))
    assert np.allclose(delayed.weights, [0.5, 0.5])

    same = _feed(init_state("RollMSE", 3), [[0.4, 0.4, 0.4], [0.1, 0.1, 0.1]])
    assert np.allclose(same.weights, np.full(3, 1.0 / 3.0))


def test_rollmse_rejects_nonpositive_epsilon() -> None:
    with pytest.raises(ConfigError):
        init_state("RollMSE", 2, epsilon=0.0)


def test_simple_average_is_static() -> None:
    state = init_state("SA", 4)
    assert state.weights.tolist() == [0.25] * 4
    state = update_simple_average(state, np.array([1.0, 0.0, 0.3, 0.9]))
    assert state.weights.tolist() == [0.25] * 4
    assert update_simple_average(init_state("SA", 1)).weights.tolist() == [1.0]


@pytest.mark.parametrize("scheme,params", ALL_SCHEMES)
def test_every_scheme_keeps_weights_on_the_simplex(scheme: str, params: dict) -> None:
    rng = np.random.default_rng(2)
    panel = LossPanel.from_losses(rng.random((80, 5)))
    run = run_scheme(panel, scheme, **params)
    for row in run.weights:
        validate_weights(row, 5)
    validate_weights(run.final_state.weights, 5)


@pytest.mark.parametrize("scheme,params", ALL_SCHEMES)
def test_every_scheme_is_permutation_equivariant(scheme: str, params: dict) -> None:
    rng = np.random.default_rng(4)
    losses = rng.random((40, 4))
    permutation = np.array([2, 0, 3, 1])
    base = run_scheme(LossPanel.from_losses(losses), scheme, **params)
    permuted = run_scheme(LossPanel.from_losses(losses[:, permutation]), scheme, **params)
    assert np.allclose(base.weights[:, permutation], permuted.weights, atol=1e-12)


def test_record_regret_examples() -> None:
    ledger = new_ledger(2)
    for row in ([0.0, 1.0], [0.0, 1.0]):
        ledger = record_regret(ledger, np.array([0.5, 0.5]), np.array(row))
    assert ledger.cumulative_regret == pytest.approx(1.0)
    assert ledger.forecaster_cumloss == pytest.approx(1.0) and ledger.best_cumloss == 0.0

    ranges = new_ledger(2)
    for row in ([0.1, 0.4], [0.0, 0.9]):
        ranges = record_regret(ranges, np.array([0.5, 0.5]), np.array(row))
    assert ranges.max_loss_range == pytest.approx(0.9)

    identical = new_ledger(3)
    for value in (0.2, 0.7, 0.1):
        identical = record_regret(identical, np.array([0.2, 0.3, 0.5]), np.full(3, value))
        assert identical.cumulative_regret == pytest.approx(0.0, abs=1e-12)


def test_ftl_regret_stays_below_range_times_leader_changes() -> None:
    rng = np.random.default_rng(13)
    for _ in range(20):
        panel = LossPanel.from_losses((rng.random((150, 4)) < rng.random(4)).astype(float))
        for ledger in run_scheme(panel, Scheme.FTL).ledgers:
            assert ledger.cumulative_regret <= ledger.max_loss_range * ledger.leader_changes + 1e-9


def test_squared_loss_of_combination_is_below_combined_losses() -> None:
    rng = np.random.default_rng(17)
    for _ in range(200):
        weights = rng.dirichlet(np.ones(6))
        forecasts, target = rng.normal(size=6), rng.normal()
        combined = (combine_forecasts(weights, forecasts) - target) ** 2
        assert combined <= float(weights @ (forecasts - target) ** 2) + 1e-12


def test_vectorized_paths_match_state_machines() -> None:
    rng = np.random.default_rng(9)
    panel = LossPanel.from_losses(rng.random((60, 5)))
    ftl = run_scheme(panel, Scheme.FTL)
    assert np.allclose(ftl_weight_path(panel), ftl.weights, atol=1e-15)

    hedge = run_scheme(panel, Scheme.HEDGE_DECREASING)
    vectorized = hedge_weight_path(panel, decreasing_rates(60, 5))
    assert np.allclose(vectorized, hedge.weights, atol=1e-12)
    path = regret_path(panel, vectorized)
    assert path.final_regret == pytest.approx(hedge.ledger.cumulative_regret, abs=1e-9)
    assert path.leader_changes[-1] == hedge.ledger.leader_changes


def test_frames_have_documented_columns() -> None:
    run = run_scheme(LossPanel.from_losses(np.array([[0.1, 0.2], [0.3, 0.0]])), Scheme.SA)
    assert list(weights_frame(run.weights).columns) == ["round", "expert_id", "weight"]
    assert len(weights_frame(run.weights)) == 4
    assert list(regret_frame(run.ledgers).columns) == [
        "round",
        "forecaster_cumloss",
        "best_cumloss",
        "regret",
        "leader_changes",
    ]


def test_adahedge_starts_uniform_and_uses_indicator_weights_while_gap_is_zero() -> None:
    state = init_state("AdaHedge", 4)
    assert state.weights.tolist() == [0.25] * 4
    state = update_adahedge(state, np.full(4, 0.3))
    assert state.memory.gap == 0.0 and math.isinf(state.memory.eta)
    assert state.weights.tolist() == [0.25] * 4
    state = update_adahedge(state, np.array([0.0, 1.0, 1.0, 1.0]))
    assert state.memory.gap > 0.0


def test_ftl_switches_leader_once_the_new_regime_overtakes_the_old() -> None:
    losses = np.vstack([np.tile([0.25, 0.75], (20, 1)), np.tile([0.75, 0.0], (20, 1))])
    panel = LossPanel.from_losses(losses)
    weights = run_scheme(panel, "FTL").weights
    leaders = np.argmax(weights[1:], axis=1)
    oracle = np.argmin(panel.cumulative[1:-1], axis=1)
    assert np.array_equal(leaders, oracle)
    assert np.array_equal(weights[33], [1.0, 0.0])
    assert np.array_equal(weights[34], [0.0, 1.0])
