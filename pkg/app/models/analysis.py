"""
Analysis Models Module

This module defines Pydantic models for the convergence-bound analysis and
for the retransmission-count selection under a cost budget.

Models:
- BoundParams: problem constants entering the loss-gap bounds
- StepSizeCheck / BoundTerms / BoundReport: evaluated admissibility and bounds
- CostModel: training cost, uplink cost and total budget
- SelectionResult: chosen retransmission count with the objective per candidate
"""

from typing import Dict, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.models.wireless import ChannelRealization, PowerPolicy


Convexity = Literal["strongly_convex", "convex"]


class BoundParams(BaseModel):
    """Problem constants for the strongly-convex and convex loss-gap bounds."""

    model_config = ConfigDict(frozen=True)

    mu: float = Field(0.0, ge=0, description="Strong convexity constant, 0 if merely convex")
    L: Optional[float] = Field(None, gt=0, description="Lipschitz smoothness constant, None if unknown")
    beta: float = Field(..., gt=0, description="Static step size")
    sigma_bound_sq: float = Field(0.0, ge=0, description="Squared norm of the coordinate variance bounds")
    d: int = Field(..., ge=1, description="Number of model parameters")
    r0_sq: float = Field(0.0, ge=0, description="Expected squared initial distance to the optimum")
    policy: PowerPolicy
    chan: ChannelRealization

    @model_validator(mode="after")
    def check_constants(self):
        if self.mu > 0 and self.L is not None and self.mu > self.L:
            raise ValueError("strong convexity constant must not exceed L")
        if self.policy.num_devices != self.chan.num_devices:
            raise ValueError("policy and channel disagree on the number of devices")
        return self

    @property
    def num_devices(self) -> int:
        return self.chan.num_devices


class StepSizeCheck(BaseModel):
    """Admissible supremum for β and whether β lies strictly below it."""

    supremum: float
    beta: float
    admissible: bool


class BoundTerms(BaseModel):
    """A bound value split into its diminishing and post-convergence parts."""

    diminishing: float
    post_convergence: float

    @property
    def total(self) -> float:
        return self.diminishing + self.post_convergence


class BoundReport(BaseModel):
    """Evaluated bound constants with the round-dependent terms."""

    convexity: Convexity
    c1: float
    c2: Optional[float] = None
    c3: float
    L: float
    beta: float
    num_devices: int
    r0_sq: float
    post_convergence_term: float

    def diminishing_term(self, n: int) -> float:
        if self.convexity == "strongly_convex":
            return 0.5 * self.L * self.c2 ** n * self.r0_sq
        if n < 1:
            raise ValueError("the convex bound is defined for rounds n >= 1")
        return self.num_devices * self.r0_sq / (2.0 * n * self.beta * self.c1)

    def total(self, n: int) -> float:
        return self.diminishing_term(n) + self.post_convergence_term


class CostModel(BaseModel):
    """Per-round training cost Ct, per-transmission uplink cost Cu and budget C̄."""

    model_config = ConfigDict(frozen=True)

    train_cost: float = Field(4.0, ge=0)
    uplink_cost: float = Field(1.0, gt=0)
    budget: float = Field(150.0, gt=0)

    @model_validator(mode="after")
    def check_one_round_affordable(self):
        if self.budget < self.train_cost + self.uplink_cost:
            raise ValueError("budget must afford at least one round with a single transmission")
        return self

    def round_cost(self, num_retx: int) -> float:
        return self.train_cost + num_retx * self.uplink_cost


class SelectionResult(BaseModel):
    """Selected retransmission count and the proxy objective per feasible candidate."""

    m_star: int
    n_star: int
    objectives: Dict[int, float]
    proxy: Literal["diminishing", "full_bound"] = "diminishing"
