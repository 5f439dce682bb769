"""
Channel Service Module

This module models the uplink block-fading multiple-access channel: it draws
unit Rayleigh fading coefficients, superposes the devices' transmissions and
adds real Gaussian noise.

The service includes:
- Channel draws (magnitudes of unit-variance complex Gaussians)
- One transmission over the MAC (superposition plus noise)
- A per-round fading process that either redraws or freezes the channel
"""

import logging
from typing import Optional

import numpy as np

from app.core.errors import ChannelError, DimensionError
from app.models.wireless import ChannelRealization

# Configure logger
logger = logging.getLogger(__name__)


def draw_channel(
    num_devices: int,
    rng: np.random.Generator,
    noise_variance: float = 0.0,
) -> ChannelRealization:
    """
    Draw one block-fading realization with unit Rayleigh fading.

    Each coefficient is h = x + jy with x, y ~ N(0, 1/2), so E[|h|^2] = 1.
    Only |h| is kept; the precoder compensates the phase.

    Args:
        num_devices: Number of devices K
        rng: Seeded generator
        noise_variance: Per-element noise power attached to the realization

    Returns:
        ChannelRealization: The drawn channel

    Raises:
        ChannelError: If num_devices < 1
    """
    if num_devices < 1:
        raise ChannelError(f"num_devices must be >= 1, got {num_devices}")
    h = (rng.standard_normal(num_devices) + 1j * rng.standard_normal(num_devices)) / np.sqrt(2.0)
    return ChannelRealization(gains=np.abs(h), noise_variance=noise_variance)


def draw_gain_matrix(num_draws: int, num_devices: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``num_draws`` independent channel magnitude vectors as a (draws, K) matrix."""
    h = (
        rng.standard_normal((num_draws, num_devices))
        + 1j * rng.standard_normal((num_draws, num_devices))
    ) / np.sqrt(2.0)
    return np.abs(h)


def transmit_once(
    signals: np.ndarray,
    chan: ChannelRealization,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Transmit one simultaneous uplink slot.

    The caller has already scaled device k's signal by sqrt(p_k); the channel
    applies |h_k|, sums over devices and adds N(0, σz²) noise per element.

    Args:
        signals: (K, d) matrix, one row per device
        chan: Channel realization shared by all devices
        rng: Generator for the additive noise

    Returns:
        np.ndarray: Received vector of length d

    Raises:
        DimensionError: If the signal rows disagree with the channel or each other
    """
    try:
        signals = np.asarray(signals, dtype=np.float64)
    except ValueError as e:
        raise DimensionError(f"signals must all have the same length: {e}")
    if signals.ndim != 2:
        raise DimensionError(f"signals must form a (K, d) matrix, got shape {signals.shape}")
    if signals.shape[0] != chan.num_devices:
        raise DimensionError(
            f"got {signals.shape[0]} signals for a channel with {chan.num_devices} devices"
        )
    if signals.shape[1] < 1:
        raise DimensionError("signals must have length >= 1")

    noise = np.sqrt(chan.noise_variance) * rng.standard_normal(signals.shape[1])
    return chan.gains @ signals + noise


class FadingProcess:
    """
    Channel state across communication rounds.

    By default a fresh realization is drawn every round (block fading) and held
    for the M retransmissions inside the round. With ``freeze`` the first
    realization is reused for the whole run.
    """

    def __init__(
        self,
        num_devices: int,
        noise_variance: float,
        rng: np.random.Generator,
        freeze: bool = False,
        fixed: Optional[ChannelRealization] = None,
    ):
        self.num_devices = num_devices
        self.noise_variance = noise_variance
        self.freeze = freeze or fixed is not None
        self._rng = rng
        self._frozen = fixed
        logger.debug(f"Fading process for {num_devices} devices (freeze={self.freeze})")

    def realization(self, round_index: int) -> ChannelRealization:
        """Return the channel for ``round_index``."""
        if self.freeze:
            if self._frozen is None:
                self._frozen = draw_channel(self.num_devices, self._rng, self.noise_variance)
            return self._frozen
        return draw_channel(self.num_devices, self._rng, self.noise_variance)
