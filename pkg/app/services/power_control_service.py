"""
Power Control Service Module

This module computes the MSE-optimal retransmission-aware power policy, the
analytic per-element estimation MSE, the retransmission-unaware baseline and a
dense-grid oracle used to certify optimality.

With t = 1/sqrt(eta) and a_k = sqrt(P_max)|h_k|, the MSE is proportional to
sum_k ((1 - a_k t)_+)^2 + (sigma_z^2 / M) t^2, which is convex in t. Restricting
the max-power set to the k weakest devices gives the unconstrained stationary
point eta_k; every such candidate lies at or above the optimum, so the optimum
is the smallest candidate.
"""

import logging
from typing import Tuple

import numpy as np

from app.core.errors import NoSignalError, PowerControlError
from app.models.wireless import ChannelRealization, PowerPolicy

# Configure logger
logger = logging.getLogger(__name__)


def _check_inputs(p_max: float, num_retx: int) -> None:
    if p_max <= 0:
        raise PowerControlError(f"p_max must be positive, got {p_max}")
    if num_retx < 1:
        raise PowerControlError(f"the number of transmissions must be >= 1, got {num_retx}")


def _eta_candidates(
    gains: np.ndarray,
    noise_variance: float,
    p_max: float,
    num_retx: int,
) -> np.ndarray:
    """Candidate scalars for every prefix of the ascending-sorted gains (last axis)."""
    amplitude = np.sqrt(p_max) * np.sort(gains, axis=-1)
    numerator = np.cumsum(amplitude ** 2, axis=-1) + noise_variance / num_retx
    denominator = np.cumsum(amplitude, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        candidates = np.where(denominator > 0, (numerator / denominator) ** 2, np.inf)
    return candidates


def eta_candidate(
    chan: ChannelRealization,
    sorted_prefix_k: int,
    p_max: float,
    num_retx: int,
) -> float:
    """
    Candidate post-transmission scalar for the ``sorted_prefix_k`` weakest devices.

    Args:
        chan: Channel realization (sorted ascending internally)
        sorted_prefix_k: Size k of the max-power prefix, 1 <= k <= K
        p_max: Peak power constraint
        num_retx: Number of transmissions M

    Returns:
        float: ((sum |h_j|^2 P + sigma_z^2/M) / (sum |h_j| sqrt(P)))^2 over the prefix

    Raises:
        PowerControlError: If k is out of range or inputs are out of domain
        NoSignalError: If all gains in the prefix are zero (division by zero)
    """
    _check_inputs(p_max, num_retx)
    if not 1 <= sorted_prefix_k <= chan.num_devices:
        raise PowerControlError(
            f"prefix size must be in [1, {chan.num_devices}], got {sorted_prefix_k}"
        )
    candidates = _eta_candidates(chan.gains, chan.noise_variance, p_max, num_retx)
    value = float(candidates[sorted_prefix_k - 1])
    if not np.isfinite(value):
        raise NoSignalError(f"division by zero: the {sorted_prefix_k} weakest gains are all zero")
    return value


def solve_power_control_batch(
    gains: np.ndarray,
    noise_variance: float,
    p_max: float,
    num_retx: int,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Optimal powers and scalars for a batch of channel draws.

    Args:
        gains: (..., K) channel magnitudes
        noise_variance: Per-element noise power
        p_max: Peak power constraint
        num_retx: Number of transmissions M

    Returns:
        Tuple containing:
            - powers with the shape of ``gains``
            - eta with the batch shape

    Raises:
        NoSignalError: If a draw has all gains equal to zero
    """
    _check_inputs(p_max, num_retx)
    gains = np.asarray(gains, dtype=np.float64)
    eta = _eta_candidates(gains, noise_variance, p_max, num_retx).min(axis=-1)
    if not np.all(np.isfinite(eta)):
        raise NoSignalError("no device has a nonzero channel gain")

    gains_sq = gains ** 2
    inversion = np.divide(
        np.expand_dims(eta, -1),
        gains_sq,
        out=np.full(gains.shape, np.inf),
        where=gains_sq > 0,
    )
    powers = np.minimum(p_max, inversion)
    return powers, eta


def solve_power_control(chan: ChannelRealization, p_max: float, num_retx: int) -> PowerPolicy:
    """
    Retransmission-aware MSE-optimal power policy.

    eta* is the smallest prefix candidate and p_k* = min(P_max, eta*/|h_k|^2).

    Raises:
        NoSignalError: If all gains are zero
        PowerControlError: If p_max or num_retx are out of domain
    """
    powers, eta = solve_power_control_batch(chan.gains, chan.noise_variance, p_max, num_retx)
    policy = PowerPolicy(powers=powers, eta=float(eta), p_max=p_max, num_retx=num_retx)
    logger.debug(
        f"Power control K={chan.num_devices} M={num_retx}: eta*={policy.eta:.6g}, "
        f"{int(np.sum(powers >= p_max))} device(s) at max power"
    )
    return policy


def solve_power_control_unaware(
    chan: ChannelRealization,
    p_max: float,
    num_retx: int,
) -> PowerPolicy:
    """Baseline that optimizes for a single transmission but is deployed with ``num_retx``."""
    _check_inputs(p_max, num_retx)
    return solve_power_control(chan, p_max, 1).restamped(num_retx)


def effective_gains(policy: PowerPolicy, chan: ChannelRealization) -> np.ndarray:
    """Received amplitude per device relative to the target, sqrt(p_k)|h_k|/sqrt(eta)."""
    if policy.num_devices != chan.num_devices:
        raise PowerControlError(
            f"policy has {policy.num_devices} devices, channel has {chan.num_devices}"
        )
    if policy.eta <= 0:
        raise PowerControlError(f"eta must be positive, got {policy.eta}")
    return np.sqrt(policy.powers) * chan.gains / np.sqrt(policy.eta)


def analytic_mse_batch(
    gains: np.ndarray,
    powers: np.ndarray,
    eta: np.ndarray,
    noise_variance: float,
    num_retx: int,
) -> np.ndarray:
    """Per-element MSE for a batch of (channel, policy) pairs; the last axis indexes devices."""
    num_devices = gains.shape[-1]
    eta = np.asarray(eta, dtype=np.float64)
    ratio = np.sqrt(powers) * gains / np.sqrt(np.expand_dims(eta, -1))
    fading = np.sum((ratio - 1.0) ** 2, axis=-1)
    noise = noise_variance / (num_retx * eta)
    return (fading + noise) / num_devices ** 2


def analytic_mse(policy: PowerPolicy, chan: ChannelRealization) -> float:
    """
    Per-element estimation MSE for zero-mean unit-variance updates.

    (1/K^2) [ sum_k (sqrt(p_k)|h_k|/sqrt(eta) - 1)^2 + sigma_z^2 / (M eta) ]

    Raises:
        PowerControlError: If eta <= 0 or the dimensions disagree
    """
    ratio = effective_gains(policy, chan)
    fading = float(np.sum((ratio - 1.0) ** 2))
    noise = chan.noise_variance / (policy.num_retx * policy.eta)
    return (fading + noise) / chan.num_devices ** 2


def mse_oracle_grid(
    chan: ChannelRealization,
    p_max: float,
    num_retx: int,
    num_points: int = 100_000,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Brute-force MSE over a log-spaced eta grid with p_k(eta) = min(P_max, eta/|h_k|^2).

    The grid spans (1e-6 * min candidate, 2 * max finite candidate].

    Returns:
        Tuple containing:
            - eta grid
            - analytic MSE at each grid point
    """
    candidates = _eta_candidates(chan.gains, chan.noise_variance, p_max, num_retx)
    finite = candidates[np.isfinite(candidates)]
    if finite.size == 0:
        raise NoSignalError("no device has a nonzero channel gain")
    etas = np.logspace(np.log10(1e-6 * finite.min()), np.log10(2.0 * finite.max()), num_points)

    amplitude = np.sqrt(p_max) * chan.gains
    ratio = np.minimum(amplitude[None, :] / np.sqrt(etas)[:, None], 1.0)
    fading = np.sum((ratio - 1.0) ** 2, axis=1)
    noise = chan.noise_variance / (num_retx * etas)
    return etas, (fading + noise) / chan.num_devices ** 2
