"""
Tests for the power control service: prefix candidates, the optimal policy,
the unaware baseline, the analytic MSE and optimality against a dense grid.
"""

import numpy as np
import pytest

from app.core.errors import NoSignalError, PowerControlError
from app.models.wireless import ChannelRealization, PowerPolicy
from app.services.channel_service import draw_channel
from app.services.power_control_service import (
    analytic_mse,
    analytic_mse_batch,
    effective_gains,
    eta_candidate,
    mse_oracle_grid,
    solve_power_control,
    solve_power_control_batch,
    solve_power_control_unaware,
)


def test_eta_candidate_hand_values(two_device_channel):
    """Gains [0.5, 2], P=1, sigma_z^2=1, M=1."""
    assert eta_candidate(two_device_channel, 1, 1.0, 1) == pytest.approx(6.25)
    assert eta_candidate(two_device_channel, 2, 1.0, 1) == pytest.approx(4.41)


def test_eta_candidate_sorts_gains():
    chan = ChannelRealization(gains=[2.0, 0.5], noise_variance=1.0)
    assert eta_candidate(chan, 1, 1.0, 1) == pytest.approx(6.25)


def test_eta_candidate_out_of_range(two_device_channel):
    with pytest.raises(PowerControlError):
        eta_candidate(two_device_channel, 3, 1.0, 1)
    with pytest.raises(PowerControlError):
        eta_candidate(two_device_channel, 0, 1.0, 1)


def test_eta_candidate_zero_prefix():
    chan = ChannelRealization(gains=[0.0, 1.0], noise_variance=1.0)
    with pytest.raises(NoSignalError):
        eta_candidate(chan, 1, 1.0, 1)


def test_solve_power_control_hand_example(two_device_channel):
    """Both devices transmit at full power; eta* is the smallest candidate."""
    policy = solve_power_control(two_device_channel, 1.0, 1)
    assert policy.eta == pytest.approx(4.41)
    np.testing.assert_allclose(policy.powers, [1.0, 1.0])


def test_solve_power_control_noiseless_inverts_all(rng):
    """With sigma_z^2 = 0, eta* = P min|h|^2 and every device inverts its channel."""
    chan = draw_channel(6, rng, noise_variance=0.0)
    policy = solve_power_control(chan, 2.0, 3)
    assert policy.eta == pytest.approx(2.0 * np.min(chan.gains) ** 2)
    np.testing.assert_allclose(effective_gains(policy, chan), np.ones(6))
    assert analytic_mse(policy, chan) == pytest.approx(0.0, abs=1e-20)


def test_solve_power_control_respects_peak(rng):
    for _ in range(50):
        chan = draw_channel(5, rng, noise_variance=rng.uniform(0.1, 10))
        policy = solve_power_control(chan, 0.7, int(rng.integers(1, 9)))
        assert np.all(policy.powers <= 0.7 * (1 + 1e-12))
        assert np.all(policy.powers >= 0)


def test_solve_power_control_zero_gain_device():
    """A device with no channel transmits at peak power and does not block the others."""
    chan = ChannelRealization(gains=[0.0, 1.0, 1.5], noise_variance=1.0)
    policy = solve_power_control(chan, 1.0, 2)
    assert policy.powers[0] == 1.0
    assert np.isfinite(policy.eta)


def test_solve_power_control_all_zero_gains():
    chan = ChannelRealization(gains=[0.0, 0.0], noise_variance=1.0)
    with pytest.raises(NoSignalError):
        solve_power_control(chan, 1.0, 1)


def test_solve_power_control_domain_errors(two_device_channel):
    with pytest.raises(PowerControlError):
        solve_power_control(two_device_channel, 0.0, 1)
    with pytest.raises(PowerControlError):
        solve_power_control(two_device_channel, 1.0, 0)


def test_eta_decreases_with_retransmissions(rng):
    """Averaging M copies lowers the effective noise, so eta* does not increase in M."""
    chan = draw_channel(10, rng, noise_variance=4.0)
    etas = [solve_power_control(chan, 1.0, m).eta for m in (1, 2, 4, 8, 16)]
    assert all(b <= a for a, b in zip(etas, etas[1:]))


def test_batch_matches_scalar(rng):
    gains = np.abs(rng.standard_normal((30, 4)))
    powers, eta = solve_power_control_batch(gains, 2.0, 1.5, 4)
    for row in range(30):
        chan = ChannelRealization(gains=gains[row], noise_variance=2.0)
        policy = solve_power_control(chan, 1.5, 4)
        assert eta[row] == pytest.approx(policy.eta)
        np.testing.assert_allclose(powers[row], policy.powers)


def test_unaware_policy_designed_for_single_transmission(two_device_channel):
    unaware = solve_power_control_unaware(two_device_channel, 1.0, 4)
    single = solve_power_control(two_device_channel, 1.0, 1)
    assert unaware.num_retx == 4
    assert unaware.eta == pytest.approx(single.eta)
    np.testing.assert_allclose(unaware.powers, single.powers)


def test_unaware_equals_aware_at_single_transmission(rng):
    chan = draw_channel(5, rng, noise_variance=2.0)
    aware = solve_power_control(chan, 1.0, 1)
    unaware = solve_power_control_unaware(chan, 1.0, 1)
    assert analytic_mse(aware, chan) == pytest.approx(analytic_mse(unaware, chan))


def test_aware_never_worse_than_unaware(rng):
    for _ in range(200):
        chan = draw_channel(int(rng.integers(1, 8)), rng, noise_variance=rng.uniform(0.1, 10))
        num_retx = int(rng.choice([2, 4, 8]))
        aware = analytic_mse(solve_power_control(chan, 1.0, num_retx), chan)
        unaware = analytic_mse(solve_power_control_unaware(chan, 1.0, num_retx), chan)
        assert aware <= unaware + 1e-12


def test_analytic_mse_plug_in(unit_channel, inverting_policy):
    """Perfect alignment leaves only the noise term sigma_z^2 / (M eta K^2)."""
    assert analytic_mse(inverting_policy, unit_channel) == pytest.approx(0.25)
    restamped = inverting_policy.restamped(4)
    assert analytic_mse(restamped, unit_channel) == pytest.approx(0.0625)


def test_analytic_mse_batch_matches_scalar(rng):
    chan = draw_channel(4, rng, noise_variance=1.5)
    policy = solve_power_control(chan, 1.0, 2)
    batch = analytic_mse_batch(chan.gains[None, :], policy.powers[None, :], np.array([policy.eta]), 1.5, 2)
    assert batch[0] == pytest.approx(analytic_mse(policy, chan))


def test_analytic_mse_rejects_mismatched_policy(unit_channel):
    policy = PowerPolicy(powers=[1.0, 1.0, 1.0], eta=1.0, p_max=1.0, num_retx=1)
    with pytest.raises(PowerControlError):
        analytic_mse(policy, unit_channel)


def test_policy_rejects_nonpositive_eta():
    with pytest.raises(ValueError):
        PowerPolicy(powers=[1.0], eta=0.0, p_max=1.0, num_retx=1)


def test_closed_form_beats_dense_grid():
    """The closed-form policy is never worse than a dense eta grid on random instances."""
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        num_devices = int(rng.integers(1, 6))
        chan = draw_channel(num_devices, rng, noise_variance=rng.uniform(0.1, 10.0))
        num_retx = int(rng.choice([1, 2, 4, 8]))
        policy = solve_power_control(chan, 1.0, num_retx)
        _, grid_mse = mse_oracle_grid(chan, 1.0, num_retx, num_points=5000)
        assert analytic_mse(policy, chan) <= grid_mse.min() + 1e-9


def test_closed_form_matches_fine_grid(rng):
    chan = draw_channel(5, rng, noise_variance=3.0)
    policy = solve_power_control(chan, 1.0, 4)
    etas, grid_mse = mse_oracle_grid(chan, 1.0, 4)
    assert analytic_mse(policy, chan) == pytest.approx(grid_mse.min(), rel=1e-6)
    assert etas[np.argmin(grid_mse)] == pytest.approx(policy.eta, rel=1e-3)


@pytest.mark.parametrize("num_retx,eta,mse", [(1, 4.0, 0.5), (4, 1.5625, 0.2)])
def test_single_device_closed_form(num_retx, eta, mse):
    chan = ChannelRealization(gains=[1.0], noise_variance=1.0)
    assert eta_candidate(chan, 1, 1.0, num_retx) == pytest.approx(eta)
    policy = solve_power_control(chan, 1.0, num_retx)
    assert policy.eta == pytest.approx(eta)
    np.testing.assert_allclose(policy.powers, [1.0])
    assert analytic_mse(policy, chan) == pytest.approx(mse)


def test_threshold_structure(rng):
    """Every device either inverts its channel or transmits at peak power."""
    chan = draw_channel(8, rng, noise_variance=2.0)
    policy = solve_power_control(chan, 1.0, 2)
    inverting = np.isclose(policy.powers * chan.gains ** 2, policy.eta)
    at_peak = np.isclose(policy.powers, 1.0)
    assert np.all(inverting | at_peak)
    assert np.any(at_peak)
