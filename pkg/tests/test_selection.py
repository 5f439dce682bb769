"""
Tests for the selection service: budget-feasible round counts and the choice of
the retransmission count M.
"""

import numpy as np
import pytest

from app.core.errors import BoundError, BudgetError, NotApplicableError
from app.models.analysis import BoundParams, CostModel
from app.models.wireless import ChannelRealization
from app.services.channel_service import draw_channel
from app.services.power_control_service import solve_power_control
from app.services.selection_service import (
    candidate_counts,
    rounds_for,
    select_m_diminishing,
    select_m_full_bound,
    select_m_per_draw,
    sweep_sigma,
)


def _channels(rng, count, num_devices, noise_variance):
    return [draw_channel(num_devices, rng, noise_variance) for _ in range(count)]


@pytest.fixture
def full_bound_params(unit_channel, inverting_policy):
    return BoundParams(
        mu=1.0, L=1.0, beta=0.25, sigma_bound_sq=1.0, d=2, r0_sq=1.0, policy=inverting_policy, chan=unit_channel
    )


@pytest.mark.parametrize("num_retx,expected", [(1, 30), (4, 18), (16, 7)])
def test_rounds_for_default_cost(num_retx, expected):
    assert rounds_for(CostModel(), num_retx) == expected


def test_rounds_for_exact_division():
    assert rounds_for(CostModel(train_cost=0.0, uplink_cost=0.1, budget=0.3), 1) == 3


def test_rounds_for_rejects_zero():
    with pytest.raises(BudgetError):
        rounds_for(CostModel(), 0)


def test_candidate_counts():
    assert candidate_counts(CostModel(train_cost=4, uplink_cost=1, budget=10), 64) == [1, 2, 3, 4, 5, 6]
    with pytest.raises(BudgetError):
        candidate_counts(CostModel(), 0)


def test_cost_model_requires_one_round():
    with pytest.raises(ValueError):
        CostModel(train_cost=4, uplink_cost=1, budget=4)


def test_noiseless_channel_selects_one(rng):
    result = select_m_diminishing(CostModel(), _channels(rng, 20, 10, 0.0), 1.0, 0.05)
    assert result.m_star == 1
    assert result.n_star == 30


def test_huge_power_selects_one(rng):
    result = select_m_diminishing(CostModel(), _channels(rng, 20, 10, 1.0), 1e12, 0.05)
    assert result.m_star == 1


def test_training_free_budget_selects_one(rng):
    """With Ct = 0 a single transmission per round is never beaten."""
    cost = CostModel(train_cost=0.0, uplink_cost=1.0, budget=30.0)
    for noise_variance in (0.25, 4.0, 100.0):
        result = select_m_diminishing(cost, _channels(rng, 50, 20, noise_variance), 1.0, 0.05)
        assert result.m_star == 1


def test_noisy_channel_selects_a_few_retransmissions(rng):
    result = select_m_diminishing(CostModel(), _channels(rng, 200, 10, 25.0), 1.0, 0.05)
    assert 2 <= result.m_star <= 8
    assert result.n_star == rounds_for(CostModel(), result.m_star)
    assert set(result.objectives) == set(range(1, 64 + 1))


def test_selection_invariant_to_initial_distance(rng):
    channels = _channels(rng, 30, 10, 9.0)
    base = select_m_diminishing(CostModel(), channels, 1.0, 0.05)
    scaled = select_m_diminishing(CostModel(), channels, 1.0, 0.05, r0_sq=7.5)
    assert base.m_star == scaled.m_star
    assert scaled.objectives[1] == pytest.approx(7.5 * base.objectives[1])


def test_single_channel_selection(two_device_channel):
    result = select_m_diminishing(CostModel(), two_device_channel, 1.0, 0.1, m_max=8)
    assert 1 <= result.m_star <= 8
    assert result.proxy == "diminishing"


def test_per_draw_selection(rng):
    channels = _channels(rng, 5, 4, 4.0)
    results = select_m_per_draw(CostModel(), channels, 1.0, 0.05, m_max=16)
    assert len(results) == 5
    for result, chan in zip(results, channels):
        assert result.m_star == select_m_diminishing(CostModel(), chan, 1.0, 0.05, m_max=16).m_star


def test_full_bound_single_candidate(full_bound_params):
    result = select_m_full_bound(CostModel(train_cost=4, uplink_cost=1, budget=5), full_bound_params, "convex")
    assert result.m_star == 1
    assert list(result.objectives) == [1]
    assert result.proxy == "full_bound"


def test_full_bound_selection_is_argmin(full_bound_params):
    result = select_m_full_bound(CostModel(), full_bound_params, "strongly_convex", m_max=16)
    assert result.objectives[result.m_star] == pytest.approx(min(result.objectives.values()), rel=1e-12)


def test_full_bound_needs_smoothness(full_bound_params):
    with pytest.raises(NotApplicableError):
        select_m_full_bound(CostModel(), full_bound_params.model_copy(update={"L": None}), "convex")


def test_full_bound_all_inadmissible(full_bound_params):
    with pytest.raises(BoundError):
        select_m_full_bound(CostModel(), full_bound_params.model_copy(update={"beta": 50.0}), "convex", m_max=4)


def test_sigma_sweep(rng):
    frame = sweep_sigma(CostModel(), 10, 1.0, 0.05, [0.0, 1.0, 3.0, 5.0], rng, channel_draws=100)
    assert list(frame["sigma_z"]) == [0.0, 1.0, 3.0, 5.0]
    assert frame["m_star"].iloc[0] == 1
    assert frame["m_star"].iloc[-1] >= 2
    assert {"n_star", "objective_M1", "objective_M64"} <= set(frame.columns)


def test_sigma_sweep_reuses_gains(rng):
    gains = np.abs(rng.standard_normal((10, 3)))
    first = sweep_sigma(CostModel(), 3, 1.0, 0.05, [2.0], rng, gains=gains)
    second = sweep_sigma(CostModel(), 3, 1.0, 0.05, [2.0], np.random.default_rng(0), gains=gains)
    assert first.equals(second)


def test_sigma_sweep_empty_grid(rng):
    with pytest.raises(BudgetError):
        sweep_sigma(CostModel(), 3, 1.0, 0.05, [], rng)


def test_selection_needs_channels():
    with pytest.raises(BudgetError):
        select_m_diminishing(CostModel(), [], 1.0, 0.05)


def test_zero_gain_draw_is_handled():
    chan = ChannelRealization(gains=[0.0, 1.0], noise_variance=1.0)
    assert select_m_diminishing(CostModel(), chan, 1.0, 0.05, m_max=4).m_star >= 1


def test_full_bound_agrees_with_diminishing_when_floor_is_small(rng):
    """A tiny step size makes the post-convergence term negligible next to the diminishing one."""
    chan = draw_channel(10, rng, noise_variance=25.0)
    policy = solve_power_control(chan, 1.0, 1)
    params = BoundParams(L=1.0, beta=0.001, sigma_bound_sq=0.0, d=2, r0_sq=1.0, policy=policy, chan=chan)
    full = select_m_full_bound(CostModel(), params, "convex")
    diminishing = select_m_diminishing(CostModel(), chan, 1.0, 0.001)
    assert full.m_star == diminishing.m_star


def test_sweep_sigma_selection_is_nondecreasing(rng):
    grid = [step / 10 for step in range(101)]
    frame = sweep_sigma(CostModel(), 10, 1.0, 0.05, grid, rng, channel_draws=100)
    selected = frame["m_star"].to_numpy()
    assert selected[0] == 1
    assert np.all(np.diff(selected) >= 0)
    assert selected[-1] > selected[0]
