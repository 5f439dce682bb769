"""
Experiment Configuration Models

An experiment is described by a single structured file (JSON or TOML) with one
section per simulator module. Command-line flags override file values.

Example (TOML):

    kind = "train"
    seed = 7

    [channel]
    num_devices = 10
    noise_variance = 4.472

    [retransmission]
    m_list = [1, 2, 4, 8, 16]

    [cost]
    train_cost = 4
    uplink_cost = 1
    budget = 150
"""

import hashlib
import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from app.core.errors import ConfigError
from app.models.analysis import CostModel


ExperimentKind = Literal[
    "mse-sweep", "baseline-compare", "train", "select-m", "sigma-sweep", "bound-validate"
]

DEFAULT_TRIALS = {
    "mse-sweep": (2000, 20000),
    "baseline-compare": (2000, 20000),
    "train": (20, 50),
    "select-m": (1, 1),
    "sigma-sweep": (1, 1),
    "bound-validate": (200, 200),
}


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ChannelSection(Section):
    num_devices: int = Field(20, ge=1)
    noise_variance: float = Field(1.0, ge=0)
    freeze: bool = Field(False, description="Hold one channel realization for the whole run")


class PowerSection(Section):
    p_max: float = Field(1.0, gt=0)
    policy: Literal["aware", "unaware"] = "aware"


class RetransmissionSection(Section):
    m_list: List[int] = Field(default_factory=lambda: [1, 2, 4, 8])
    sigma_z_grid: List[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0, 3.0, 4.0, 5.0])

    @field_validator("m_list")
    @classmethod
    def validate_m_list(cls, v):
        if not v or any(m < 1 for m in v):
            raise ValueError("m_list must be a nonempty list of integers >= 1")
        return v

    @field_validator("sigma_z_grid")
    @classmethod
    def validate_sigma_grid(cls, v):
        if not v or any(s < 0 for s in v):
            raise ValueError("sigma_z_grid must be a nonempty list of nonnegative values")
        return v


class LearnerSection(Section):
    problem: Literal["mnist", "regression", "quadratic"] = "mnist"
    beta: float = Field(0.05, gt=0)
    epochs: int = Field(2, ge=1)
    hidden: int = Field(100, ge=1)
    activation: Literal["relu", "tanh"] = "relu"
    normalize_updates: bool = True


class DataSection(Section):
    mnist_dir: Optional[str] = None
    samples_per_device: int = Field(600, ge=1)
    mnist_test_samples: int = Field(2000, ge=1)
    regression_samples: int = Field(30000, ge=2)
    regression_test_samples: int = Field(5000, ge=1)
    regression_noise: float = Field(0.1, ge=0)
    export_path: Optional[str] = Field(None, description="CSV path for the generated regression dataset")


class SelectionSection(Section):
    m_max: int = Field(64, ge=1)
    channel_draws: int = Field(100, ge=1)
    proxy: Literal["diminishing", "full_bound"] = "diminishing"
    convexity: Literal["strongly_convex", "convex"] = Field(
        "convex", description="Bound used by the full-bound proxy"
    )
    per_draw: bool = False


class BoundsSection(Section):
    num_devices: int = Field(4, ge=1)
    dim: int = Field(8, ge=1)
    spread: float = Field(0.0, ge=0)
    jitter: float = Field(1.0, ge=0)
    noise_variance: float = Field(1.0, ge=0)
    rounds: int = Field(50, ge=1)
    beta_fraction: float = Field(0.5, gt=0, lt=1)


class ExperimentConfig(BaseModel):
    """Complete description of one experiment run."""

    model_config = ConfigDict(extra="forbid")

    kind: ExperimentKind
    seed: int = Field(..., ge=0)
    trials: Optional[int] = Field(None, ge=1)
    output: Optional[str] = None
    full_scale: bool = False

    channel: ChannelSection = Field(default_factory=ChannelSection)
    power: PowerSection = Field(default_factory=PowerSection)
    retransmission: RetransmissionSection = Field(default_factory=RetransmissionSection)
    learner: LearnerSection = Field(default_factory=LearnerSection)
    data: DataSection = Field(default_factory=DataSection)
    cost: CostModel = Field(default_factory=CostModel)
    selection: SelectionSection = Field(default_factory=SelectionSection)
    bounds: BoundsSection = Field(default_factory=BoundsSection)

    def resolved_trials(self) -> int:
        """Trials requested explicitly, else the desk-scale or full-scale default."""
        if self.trials is not None:
            return self.trials
        desk, full = DEFAULT_TRIALS[self.kind]
        return full if self.full_scale else desk

    def samples_per_device(self) -> int:
        return 6000 if self.full_scale else self.data.samples_per_device

    def config_hash(self) -> str:
        """Stable short hash of the resolved configuration (output paths excluded)."""
        payload = self.model_dump(mode="json", exclude={"output": True, "data": {"export_path": True}})
        payload["trials"] = self.resolved_trials()
        digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8"))
        return digest.hexdigest()[:16]


def read_config_file(path: str) -> Dict[str, Any]:
    """
    Read a JSON or TOML experiment file into a plain dictionary.

    Raises:
        ConfigError: If the file is missing or cannot be parsed
    """
    file_path = Path(path)
    if not file_path.exists():
        raise ConfigError(f"Config file not found: {path}")
    try:
        if file_path.suffix == ".toml":
            with file_path.open("rb") as f:
                return tomllib.load(f)
        with file_path.open("r", encoding="utf-8") as f:
            return json.load(f)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"Could not parse {path}: {e}")


def load_experiment_config(
    path: Optional[str] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> ExperimentConfig:
    """
    Build an ExperimentConfig from a file and top-level overrides.

    Args:
        path: Optional JSON/TOML file
        overrides: Values that replace file values (None entries are ignored)

    Returns:
        ExperimentConfig: Validated configuration

    Raises:
        ConfigError: If validation fails
    """
    raw: Dict[str, Any] = read_config_file(path) if path else {}
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = value
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"Invalid experiment config: {e.errors(include_url=False)}")
