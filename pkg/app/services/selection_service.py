"""
Selection Service Module

This module chooses the number of uplink transmissions M under a cost budget.
Running N rounds with M transmissions each costs (Ct + M Cu) N, so the budget
fixes N(M) = floor(C / (Ct + M Cu)). More transmissions suppress channel noise
but leave fewer rounds.

The service includes:
- The feasible round count per M
- Selection by the diminishing term of the convex bound, K / (2 N(M) beta c1(M)),
  averaged over channel draws or per draw
- Selection by the full loss-gap bound at N(M) (known L only)
- A sweep of the selected M over a grid of noise standard deviations
"""

import logging
import math
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from app.core.errors import BoundError, BudgetError, NotApplicableError
from app.models.analysis import BoundParams, Convexity, CostModel, SelectionResult
from app.models.wireless import ChannelRealization
from app.services.bounds_service import loss_gap_bound
from app.services.channel_service import draw_gain_matrix
from app.services.power_control_service import solve_power_control, solve_power_control_batch

# Configure logger
logger = logging.getLogger(__name__)

TIE_TOLERANCE = 1e-12
DEFAULT_M_MAX = 64


def rounds_for(cost: CostModel, num_retx: int) -> int:
    """
    Number of complete rounds the budget affords with ``num_retx`` transmissions.

    Returns 0 when not even one round fits; such M are infeasible.

    Raises:
        BudgetError: If num_retx < 1
    """
    if num_retx < 1:
        raise BudgetError(f"the number of transmissions must be >= 1, got {num_retx}")
    return int(math.floor(cost.budget / cost.round_cost(num_retx) * (1 + 1e-12)))


def candidate_counts(cost: CostModel, m_max: int = DEFAULT_M_MAX) -> List[int]:
    """
    Feasible M values 1..min(m_max, largest affordable M).

    Raises:
        BudgetError: If no M is feasible
    """
    candidates = [m for m in range(1, m_max + 1) if rounds_for(cost, m) >= 1]
    if not candidates:
        raise BudgetError(
            f"no retransmission count in [1, {m_max}] fits the budget {cost.budget:g}"
        )
    return candidates


def _argmin(objectives: Dict[int, float]) -> int:
    best = min(objectives.values())
    return min(m for m, value in objectives.items() if value <= best * (1 + TIE_TOLERANCE))


def _gain_matrix(chan: Union[ChannelRealization, Sequence[ChannelRealization]]):
    if isinstance(chan, ChannelRealization):
        return chan.gains[None, :], chan.noise_variance
    channels = list(chan)
    if not channels:
        raise BudgetError("selection needs at least one channel realization")
    return np.vstack([c.gains for c in channels]), channels[0].noise_variance


def diminishing_objectives(
    cost: CostModel,
    gains: np.ndarray,
    noise_variance: float,
    p_max: float,
    beta: float,
    m_max: int = DEFAULT_M_MAX,
    r0_sq: float = 1.0,
) -> Dict[int, np.ndarray]:
    """
    Per-draw diminishing-term objective for every feasible M.

    Args:
        gains: (draws, K) channel magnitudes
        r0_sq: Positive multiplier reinstating E[r0^2]

    Returns:
        Dict mapping M to a (draws,) array of r0_sq * K sqrt(eta) / (2 N beta sum sqrt(p)|h|)
    """
    num_devices = gains.shape[1]
    objectives = {}
    for num_retx in candidate_counts(cost, m_max):
        powers, eta = solve_power_control_batch(gains, noise_variance, p_max, num_retx)
        c1 = np.sum(np.sqrt(powers) * gains, axis=1) / np.sqrt(eta)
        n_rounds = rounds_for(cost, num_retx)
        objectives[num_retx] = r0_sq * num_devices / (2.0 * n_rounds * beta * c1)
    return objectives


def select_m_diminishing(
    cost: CostModel,
    chan: Union[ChannelRealization, Sequence[ChannelRealization]],
    p_max: float,
    beta: float,
    m_max: int = DEFAULT_M_MAX,
    r0_sq: float = 1.0,
) -> SelectionResult:
    """
    Pick M minimizing the diminishing term of the convex bound.

    With several channel realizations the objective is averaged over them before
    the argmin. Ties within a relative 1e-12 go to the smaller M.

    Args:
        cost: Cost model
        chan: One realization or a sequence sharing the noise variance
        p_max: Peak power constraint
        beta: Step size
        m_max: Largest M considered
        r0_sq: Positive multiplier for E[r0^2]; does not change the argmin

    Returns:
        SelectionResult: m_star, n_star and the averaged objective per M

    Raises:
        BudgetError: If no M is feasible
    """
    gains, noise_variance = _gain_matrix(chan)
    per_draw = diminishing_objectives(cost, gains, noise_variance, p_max, beta, m_max, r0_sq)
    objectives = {m: float(np.mean(values)) for m, values in per_draw.items()}
    m_star = _argmin(objectives)
    logger.debug(f"Diminishing-term selection over {gains.shape[0]} draw(s): M*={m_star}")
    return SelectionResult(
        m_star=m_star, n_star=rounds_for(cost, m_star), objectives=objectives, proxy="diminishing"
    )


def select_m_per_draw(
    cost: CostModel,
    channels: Sequence[ChannelRealization],
    p_max: float,
    beta: float,
    m_max: int = DEFAULT_M_MAX,
) -> List[SelectionResult]:
    """Run the diminishing-term selection separately on each channel realization."""
    gains, noise_variance = _gain_matrix(channels)
    per_draw = diminishing_objectives(cost, gains, noise_variance, p_max, beta, m_max)
    results = []
    for index in range(gains.shape[0]):
        objectives = {m: float(values[index]) for m, values in per_draw.items()}
        m_star = _argmin(objectives)
        results.append(
            SelectionResult(
                m_star=m_star,
                n_star=rounds_for(cost, m_star),
                objectives=objectives,
                proxy="diminishing",
            )
        )
    return results


def select_m_full_bound(
    cost: CostModel,
    params: BoundParams,
    convexity: Convexity,
    m_max: int = DEFAULT_M_MAX,
) -> SelectionResult:
    """
    Pick M minimizing the full loss-gap bound evaluated at N(M).

    The channel, constants and p_max come from ``params``; the optimal policy is
    recomputed for each M. Candidates whose step size is inadmissible are
    excluded with a warning.

    Raises:
        NotApplicableError: If L is unknown (or mu = 0 for the strongly convex bound)
        BoundError: If no candidate admits the step size
    """
    if params.L is None:
        raise NotApplicableError("the full-bound proxy needs a known smoothness constant L")

    objectives: Dict[int, float] = {}
    for num_retx in candidate_counts(cost, m_max):
        policy = solve_power_control(params.chan, params.policy.p_max, num_retx)
        candidate = params.model_copy(update={"policy": policy})
        try:
            terms = loss_gap_bound(candidate, rounds_for(cost, num_retx), convexity)
        except BoundError as e:
            logger.warning(f"Excluding M={num_retx} from full-bound selection: {e}")
            continue
        objectives[num_retx] = terms.total

    if not objectives:
        raise BoundError("the step size is inadmissible for every feasible retransmission count")
    m_star = _argmin(objectives)
    return SelectionResult(
        m_star=m_star, n_star=rounds_for(cost, m_star), objectives=objectives, proxy="full_bound"
    )


def sweep_sigma(
    cost: CostModel,
    num_devices: int,
    p_max: float,
    beta: float,
    sigma_grid: Sequence[float],
    rng: np.random.Generator,
    channel_draws: int = 100,
    m_max: int = DEFAULT_M_MAX,
    gains: Optional[np.ndarray] = None,
) -> pd.DataFrame:
    """
    Draw-averaged selection for each noise standard deviation in ``sigma_grid``.

    The same channel draws are reused at every grid point.

    Returns:
        pd.DataFrame: Columns sigma_z, m_star, n_star, objective_M1 .. objective_M{max}
    """
    if len(sigma_grid) == 0:
        raise BudgetError("the noise grid must not be empty")
    if gains is None:
        gains = draw_gain_matrix(channel_draws, num_devices, rng)

    records = []
    for sigma_z in sigma_grid:
        per_draw = diminishing_objectives(cost, gains, sigma_z ** 2, p_max, beta, m_max)
        objectives = {m: float(np.mean(values)) for m, values in per_draw.items()}
        m_star = _argmin(objectives)
        record = {"sigma_z": float(sigma_z), "m_star": m_star, "n_star": rounds_for(cost, m_star)}
        record.update({f"objective_M{m}": value for m, value in objectives.items()})
        records.append(record)
        logger.info(f"sigma_z={sigma_z:g}: M*={m_star}")
    return pd.DataFrame.from_records(records)
