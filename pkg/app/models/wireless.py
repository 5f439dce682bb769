"""
Wireless Models Module

This module defines Pydantic models for the uplink channel and the transmit
power policy used throughout the simulator.

Models:
- ChannelRealization: per-device channel magnitudes plus noise variance for one round
- PowerPolicy: per-device transmit powers, post-transmission scalar and retransmission count
"""

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


def as_readonly_vector(value) -> np.ndarray:
    """Convert a sequence to an immutable 1-D float64 array."""
    array = np.array(value, dtype=np.float64, copy=True).reshape(-1)
    array.setflags(write=False)
    return array


class ChannelRealization(BaseModel):
    """
    Block-fading multiple-access channel for one communication round.

    Only magnitudes |h_k| are stored: the precoder pre-rotates by the channel
    phase, so the effective channel seen by the server is real.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    gains: np.ndarray = Field(..., description="Channel magnitudes |h_k|, one per device")
    noise_variance: float = Field(..., ge=0, description="Per-element noise power")

    @field_validator("gains", mode="before")
    @classmethod
    def coerce_gains(cls, v):
        return as_readonly_vector(v)

    @model_validator(mode="after")
    def check_gains(self):
        if self.gains.size < 1:
            raise ValueError("a channel needs at least one device")
        if not np.all(np.isfinite(self.gains)) or np.any(self.gains < 0):
            raise ValueError("channel gains must be finite and nonnegative")
        return self

    @property
    def num_devices(self) -> int:
        return int(self.gains.size)

    def with_noise(self, noise_variance: float) -> "ChannelRealization":
        """Return the same fading realization with a different noise variance."""
        return ChannelRealization(gains=self.gains, noise_variance=noise_variance)


class PowerPolicy(BaseModel):
    """
    Transmit power policy for one round.

    ``powers`` are expected per-element transmit powers p_k (the normalized
    updates have unit variance), ``eta`` the post-transmission scalar and
    ``num_retx`` the number of uplink transmissions M the policy was deployed for.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    powers: np.ndarray = Field(..., description="Transmit powers p_k")
    eta: float = Field(..., gt=0, description="Post-transmission scalar")
    p_max: float = Field(..., gt=0, description="Peak power constraint")
    num_retx: int = Field(..., ge=1, description="Number of uplink transmissions M")

    @field_validator("powers", mode="before")
    @classmethod
    def coerce_powers(cls, v):
        return as_readonly_vector(v)

    @model_validator(mode="after")
    def check_peak_constraint(self):
        if np.any(self.powers < 0) or np.any(self.powers > self.p_max * (1 + 1e-12)):
            raise ValueError("transmit powers must lie in [0, p_max]")
        return self

    @property
    def num_devices(self) -> int:
        return int(self.powers.size)

    def restamped(self, num_retx: int) -> "PowerPolicy":
        """Return the same powers and scalar deployed with ``num_retx`` transmissions."""
        return self.model_copy(update={"num_retx": num_retx})
