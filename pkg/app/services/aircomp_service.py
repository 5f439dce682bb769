"""
AirComp Service Module

This module implements the analog aggregation layer of a training round:
devices normalize their updates, precode them with sqrt(p_k), transmit the same
signal M times over the MAC, and the parameter server averages the M received
copies, rescales by 1/(sqrt(eta) K) and undoes the normalization with the
averaged per-device statistics.

The service includes:
- Per-device normalization (sample statistics, d-1 divisor)
- Raw passthrough for zero-mean unit-variance updates
- M-fold uplink aggregation with fresh noise per transmission
- Server-side denormalization
- A vectorised scalar-estimation experiment for Monte-Carlo MSE sweeps
"""

import logging
from typing import Sequence, Tuple

import numpy as np

from app.core.errors import DimensionError
from app.models.learning import ModelUpdate, NormalizedUpdate
from app.models.wireless import ChannelRealization, PowerPolicy
from app.services.channel_service import transmit_once

# Configure logger
logger = logging.getLogger(__name__)

STD_EPSILON = 1e-12


def normalize(update: ModelUpdate) -> NormalizedUpdate:
    """
    Normalize an update to zero sample mean and unit sample variance.

    Args:
        update: Raw update of d >= 2 reals

    Returns:
        NormalizedUpdate: Normalized values with the mean and std that undo it.
            A constant update (std < 1e-12) becomes all zeros with std 0.

    Raises:
        DimensionError: If d < 2
    """
    if update.dim < 2:
        raise DimensionError(f"normalization needs at least 2 elements, got {update.dim}")

    mean = float(np.mean(update.values))
    std = float(np.std(update.values, ddof=1))
    if std < STD_EPSILON:
        return NormalizedUpdate(
            values=np.zeros(update.dim), mean=mean, std=0.0, device_id=update.device_id
        )
    return NormalizedUpdate(
        values=(update.values - mean) / std, mean=mean, std=std, device_id=update.device_id
    )


def passthrough(update: ModelUpdate) -> NormalizedUpdate:
    """Send an update unchanged, recorded with mean 0 and std 1."""
    return NormalizedUpdate(values=update.values, mean=0.0, std=1.0, device_id=update.device_id)


def aggregate_uplink(
    updates: Sequence[NormalizedUpdate],
    policy: PowerPolicy,
    chan: ChannelRealization,
    num_retx: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Transmit the precoded updates ``num_retx`` times and average at the server.

    The fading is static within the call and every transmission carries the
    same signals with fresh noise. The returned estimate is

        Y = sum_k |h_k| sqrt(p_k) / (sqrt(eta) K) * x_k + sum_m z_m / (M sqrt(eta) K)

    Args:
        updates: One normalized update per device, all of length d
        policy: Power policy sharing K with the channel
        chan: Channel realization for this round
        num_retx: Number of transmissions M
        rng: Generator consumed sequentially by the M transmissions

    Returns:
        np.ndarray: Aggregate of length d

    Raises:
        DimensionError: If K or d disagree, or num_retx < 1
    """
    if num_retx < 1:
        raise DimensionError(f"the number of transmissions must be >= 1, got {num_retx}")
    if len(updates) != chan.num_devices or policy.num_devices != chan.num_devices:
        raise DimensionError(
            f"got {len(updates)} updates and a {policy.num_devices}-device policy "
            f"for a {chan.num_devices}-device channel"
        )
    dims = {u.dim for u in updates}
    if len(dims) != 1:
        raise DimensionError(f"updates must share one dimension, got {sorted(dims)}")

    signals = np.sqrt(policy.powers)[:, None] * np.vstack([u.values for u in updates])
    received = np.zeros(signals.shape[1])
    for _ in range(num_retx):
        received += transmit_once(signals, chan, rng)

    return received / (num_retx * np.sqrt(policy.eta) * chan.num_devices)


def denormalize(aggregate: np.ndarray, stats: Sequence[Tuple[float, float]]) -> ModelUpdate:
    """
    Reconstruct the global update from the aggregate and the per-device statistics.

    Computes Re(Y) * mean(std_k) + mean(mean_k); the real part is a no-op in the
    real-baseband model.

    Args:
        aggregate: Server-side aggregate
        stats: (mean, std) per device, received over the control channel

    Returns:
        ModelUpdate: Estimated global update

    Raises:
        DimensionError: If stats is empty
    """
    if len(stats) == 0:
        raise DimensionError("denormalization needs the statistics of at least one device")
    means, stds = np.asarray(stats, dtype=np.float64).T
    estimate = np.real(np.asarray(aggregate)) * np.mean(stds) + np.mean(means)
    return ModelUpdate(values=estimate)


def estimate_mean_batch(
    gains: np.ndarray,
    powers: np.ndarray,
    eta: np.ndarray,
    noise_variance: float,
    num_retx: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Squared estimation error of over-the-air averaging for a batch of trials.

    Each trial draws K unit-normal scalars, transmits them M times over its own
    channel and noise, and compares the receiver's estimate with their true mean.

    Args:
        gains: (T, K) channel magnitudes
        powers: (T, K) transmit powers
        eta: (T,) post-transmission scalars
        noise_variance: Per-element noise power
        num_retx: Number of transmissions M
        rng: Generator for the symbols and the noise

    Returns:
        np.ndarray: (T,) squared errors
    """
    num_trials, num_devices = gains.shape
    symbols = rng.standard_normal((num_trials, num_devices))
    noise = np.sqrt(noise_variance) * rng.standard_normal((num_trials, num_retx))

    sqrt_eta = np.sqrt(eta)
    received = np.sum(np.sqrt(powers) * gains * symbols, axis=1)
    estimate = (received + noise.mean(axis=1)) / (sqrt_eta * num_devices)
    target = symbols.mean(axis=1)
    return (estimate - target) ** 2
