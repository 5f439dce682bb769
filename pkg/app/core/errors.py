"""
Error hierarchy shared by the simulator services.

Every error carries a machine-readable ``category`` which the CLI reports on
stderr and maps to a process exit code.
"""

from typing import Dict, Optional


class SimulationError(Exception):
    """Base class for all simulator errors."""

    category: str = "internal"


class DimensionError(SimulationError):
    """Raised when vector or device counts disagree."""

    category = "dimension"


class ChannelError(SimulationError):
    """Raised for invalid channel realizations or transmissions."""

    category = "channel"


class NoSignalError(SimulationError):
    """Raised when no device has a usable (nonzero) channel."""

    category = "no-signal"


class PowerControlError(SimulationError):
    """Raised for out-of-domain power control inputs."""

    category = "domain"


class NumericalError(SimulationError):
    """Raised when training produces non-finite values."""

    category = "numerical"


class BoundError(SimulationError):
    """Raised when a convergence bound is requested for an inadmissible step size."""

    category = "bound"


class NotApplicableError(SimulationError):
    """Raised when a bound or proxy needs constants that are unknown."""

    category = "not-applicable"


class BudgetError(SimulationError):
    """Raised when the cost budget admits no retransmission count."""

    category = "budget"


class DataFormatError(SimulationError):
    """Raised for malformed dataset files."""

    category = "format"

    def __init__(self, message: str, offset: Optional[int] = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(SimulationError):
    """Raised for invalid experiment configuration."""

    category = "config"


EXIT_CODES: Dict[str, int] = {
    "internal": 1,
    "config": 2,
    "format": 3,
    "dimension": 4,
    "channel": 4,
    "no-signal": 4,
    "domain": 4,
    "numerical": 5,
    "bound": 6,
    "not-applicable": 6,
    "budget": 7,
}
