"""
Learning Models Module

This module defines Pydantic models for the federated learning side of the
simulator: model updates and their normalization statistics, the global model,
local problems, the MLP architecture, datasets and training traces.
"""

from typing import Any, List, Literal, Optional, Protocol, runtime_checkable

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.models.analysis import CostModel
from app.models.wireless import as_readonly_vector


TaskKind = Literal["classification", "regression", "quadratic"]

TRACE_COLUMNS = ["round", "loss", "metric", "cum_cost", "M", "eta", "seed"]


@runtime_checkable
class Objective(Protocol):
    """A differentiable local loss over a flat parameter vector."""

    def loss(self, weights: np.ndarray) -> float: ...

    def gradient(self, weights: np.ndarray) -> np.ndarray: ...


class ModelUpdate(BaseModel):
    """A device's (or the server's estimated) model update ΔW."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray = Field(..., description="Update vector of d reals")
    device_id: int = Field(-1, description="Originating device, -1 for server-side estimates")

    @field_validator("values", mode="before")
    @classmethod
    def coerce_values(cls, v):
        return as_readonly_vector(v)

    @property
    def dim(self) -> int:
        return int(self.values.size)


class NormalizedUpdate(BaseModel):
    """A zero-mean, unit-variance update together with the statistics that undo it."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray = Field(..., description="Normalized update vector")
    mean: float = Field(..., description="Sample mean of the raw update")
    std: float = Field(..., ge=0, description="Sample standard deviation (d-1 divisor)")
    device_id: int = Field(-1)

    @field_validator("values", mode="before")
    @classmethod
    def coerce_values(cls, v):
        return as_readonly_vector(v)

    @property
    def dim(self) -> int:
        return int(self.values.size)


class GlobalModel(BaseModel):
    """Global model W_n held by the parameter server."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    weights: np.ndarray = Field(..., description="Flat parameter vector")
    round: int = Field(0, ge=0, description="Communication round n")

    @field_validator("weights", mode="before")
    @classmethod
    def coerce_weights(cls, v):
        return as_readonly_vector(v)

    @model_validator(mode="after")
    def check_finite(self):
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("global model weights must be finite")
        return self

    @property
    def dim(self) -> int:
        return int(self.weights.size)


class MLPSpec(BaseModel):
    """Fully-connected network architecture."""

    layer_sizes: List[int] = Field(..., min_length=2, description="Input, hidden..., output sizes")
    activation: Literal["relu", "tanh"] = Field("relu", description="Hidden-layer activation")
    head: Literal["softmax_ce", "linear_mse"] = Field(
        "softmax_ce", description="Output layer coupled with its loss"
    )

    @field_validator("layer_sizes")
    @classmethod
    def validate_sizes(cls, v):
        if any(size < 1 for size in v):
            raise ValueError("all layer sizes must be >= 1")
        return v

    @property
    def task(self) -> TaskKind:
        return "classification" if self.head == "softmax_ce" else "regression"


class LocalProblem(BaseModel):
    """A device's local training problem: objective, epochs E and step size β."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    kind: TaskKind
    objective: Any = Field(..., description="Object exposing loss(w) and gradient(w)")
    epochs: int = Field(1, ge=1)
    step_size: float = Field(..., gt=0)
    device_id: int = Field(0)

    @field_validator("objective")
    @classmethod
    def check_objective(cls, v):
        if not isinstance(v, Objective):
            raise ValueError("objective must provide loss(weights) and gradient(weights)")
        return v


class Dataset(BaseModel):
    """Features and targets (integer labels or reals)."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    features: np.ndarray
    targets: np.ndarray
    task: Literal["classification", "regression"]

    @model_validator(mode="after")
    def check_rows(self):
        if self.features.ndim != 2:
            raise ValueError("features must be a (samples x input_dim) matrix")
        if self.features.shape[0] != self.targets.shape[0]:
            raise ValueError("features and targets must have the same number of rows")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")
        return self

    def __len__(self) -> int:
        return int(self.features.shape[0])

    @property
    def input_dim(self) -> int:
        return int(self.features.shape[1])


class Shard(Dataset):
    """The local dataset D_k of one device."""

    device_id: int = Field(..., ge=0)


class TrainingSetup(BaseModel):
    """Per-run knobs of the AirReComp training loop."""

    num_retx: int = Field(1, ge=1, description="Transmissions per round M")
    beta: float = Field(0.05, gt=0, description="Static step size")
    epochs: int = Field(1, ge=1, description="Local gradient-descent epochs E")
    p_max: float = Field(1.0, gt=0)
    policy: Literal["aware", "unaware"] = "aware"
    normalize_updates: bool = True
    cost: CostModel = Field(default_factory=CostModel)
    num_rounds: Optional[int] = Field(
        None, ge=1, description="Rounds to run; defaults to the budget-feasible count"
    )
    seed: int = Field(0, ge=0, description="Recorded in the trace rows")


class TraceRow(BaseModel):
    """One completed communication round."""

    round: int
    loss: float
    metric: float
    cum_cost: float
    num_retx: int
    eta: float
    seed: int


class TrainingTrace(BaseModel):
    """Per-round record of one AirReComp training run."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    rows: List[TraceRow] = Field(default_factory=list)
    sigma_sq_max: Optional[float] = Field(
        None, description="Max over rounds of the measured coordinate-variance plug-in"
    )
    final_weights: Optional[np.ndarray] = Field(None, description="Global model after the last round")

    def __len__(self) -> int:
        return len(self.rows)

    def to_frame(self) -> pd.DataFrame:
        """Tabulate the trace with the fixed CSV columns."""
        records = [
            {
                "round": row.round,
                "loss": row.loss,
                "metric": row.metric,
                "cum_cost": row.cum_cost,
                "M": row.num_retx,
                "eta": row.eta,
                "seed": row.seed,
            }
            for row in self.rows
        ]
        return pd.DataFrame.from_records(records, columns=TRACE_COLUMNS)
