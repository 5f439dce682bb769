"""
Bounds Service Module

This module evaluates the convergence guarantees of AirReComp training with one
local epoch and zero-mean unit-variance updates: the constants c1, c2 and c3,
the step-size admissibility conditions, and the loss-gap bounds for strongly
convex and convex objectives.

    c1 = sum_k sqrt(p_k)|h_k| / sqrt(eta)
    c2 = 1 - (2 beta / K) (mu L / (mu + L)) c1
    c3 = ||sigma||^2 sum_k p_k|h_k|^2 / (K eta) + d sigma_z^2 / (M K^2 eta)

Strongly convex: L/2 c2^n r0^2 + beta^2 L c3 / (2 (1 - c2))
Convex:          K r0^2 / (2 n beta c1) + beta/2 (K/c1 + L beta) c3
"""

import logging
from typing import Iterable, List, Sequence

import numpy as np
import pandas as pd

from app.core.errors import BoundError, NotApplicableError
from app.models.analysis import BoundParams, BoundReport, BoundTerms, Convexity, StepSizeCheck
from app.models.learning import ModelUpdate
from app.models.wireless import ChannelRealization, PowerPolicy
from app.services.power_control_service import solve_power_control

# Configure logger
logger = logging.getLogger(__name__)

BOUND_SWEEP_COLUMNS = ["M", "n", "c1", "c2", "c3", "diminishing", "post_convergence", "total"]


def _require_smoothness(params: BoundParams) -> float:
    if params.L is None:
        raise NotApplicableError("the smoothness constant L is unknown; bounds do not apply")
    return params.L


def compute_c1(policy: PowerPolicy, chan: ChannelRealization) -> float:
    """Effective aggregate gain sum_k sqrt(p_k)|h_k| / sqrt(eta)."""
    return float(np.sum(np.sqrt(policy.powers) * chan.gains) / np.sqrt(policy.eta))


def compute_c2(params: BoundParams) -> float:
    """
    Per-round contraction factor of the strongly convex bound.

    Raises:
        NotApplicableError: If mu = 0 or L is unknown
    """
    if params.mu <= 0:
        raise NotApplicableError("c2 is defined for strongly convex objectives only (mu > 0)")
    L = _require_smoothness(params)
    c1 = compute_c1(params.policy, params.chan)
    return 1.0 - (2.0 * params.beta / params.num_devices) * (params.mu * L / (params.mu + L)) * c1


def compute_c3(params: BoundParams) -> float:
    """Per-round error-floor contribution from update heterogeneity and channel noise."""
    policy, chan = params.policy, params.chan
    K = params.num_devices
    received_power = float(np.sum(policy.powers * chan.gains ** 2))
    heterogeneity = params.sigma_bound_sq * received_power / (K * policy.eta)
    noise = params.d * chan.noise_variance / (policy.num_retx * K ** 2 * policy.eta)
    return heterogeneity + noise


def check_step_size(params: BoundParams, convexity: Convexity) -> StepSizeCheck:
    """
    Admissible supremum for the step size and whether beta lies strictly below it.

    Args:
        params: Problem constants
        convexity: "strongly_convex" or "convex"

    Returns:
        StepSizeCheck: Supremum, beta and the strict comparison

    Raises:
        NotApplicableError: If L is unknown, or mu = 0 for the strongly convex case
    """
    L = _require_smoothness(params)
    policy, chan = params.policy, params.chan
    sqrt_eta = np.sqrt(policy.eta)
    amplitude = float(np.sum(np.sqrt(policy.powers) * chan.gains))
    received_power = float(np.sum(policy.powers * chan.gains ** 2))
    if amplitude <= 0 or received_power <= 0:
        raise NotApplicableError("no device reaches the receiver; the step-size condition is undefined")

    if convexity == "strongly_convex":
        if params.mu <= 0:
            raise NotApplicableError("the strongly convex condition needs mu > 0")
        mu = params.mu
        supremum = min(
            params.num_devices * sqrt_eta * (mu + L) / (2.0 * mu * L * amplitude),
            (2.0 * sqrt_eta / (mu + L)) * amplitude / received_power,
        )
    else:
        supremum = (sqrt_eta / L) * amplitude / received_power

    return StepSizeCheck(supremum=float(supremum), beta=params.beta, admissible=params.beta < supremum)


def evaluate_bounds(params: BoundParams, convexity: Convexity) -> BoundReport:
    """
    Evaluate all bound constants for an admissible configuration.

    Raises:
        BoundError: If beta violates the step-size condition
        NotApplicableError: If the constants needed by ``convexity`` are unknown
    """
    check = check_step_size(params, convexity)
    if not check.admissible:
        raise BoundError(
            f"step size {params.beta:.6g} violates the {convexity} condition "
            f"beta < {check.supremum:.6g}"
        )
    L = _require_smoothness(params)
    c1 = compute_c1(params.policy, params.chan)
    c3 = compute_c3(params)
    K = params.num_devices

    if convexity == "strongly_convex":
        c2 = compute_c2(params)
        post = params.beta ** 2 * L * c3 / (2.0 * (1.0 - c2))
    else:
        c2 = None
        post = 0.5 * params.beta * (K / c1 + L * params.beta) * c3

    return BoundReport(
        convexity=convexity,
        c1=c1,
        c2=c2,
        c3=c3,
        L=L,
        beta=params.beta,
        num_devices=K,
        r0_sq=params.r0_sq,
        post_convergence_term=post,
    )


def loss_gap_bound(params: BoundParams, n: int, convexity: Convexity) -> BoundTerms:
    """
    Upper bound on E[F(W_n)] - F(W*) after ``n`` rounds.

    Args:
        params: Problem constants
        n: Round index (n >= 1 for the convex bound)
        convexity: Which bound to evaluate

    Returns:
        BoundTerms: Diminishing and post-convergence parts

    Raises:
        BoundError: If beta is inadmissible or n is out of range
    """
    if n < 0 or (convexity == "convex" and n < 1):
        raise BoundError(f"round index {n} is out of range for the {convexity} bound")
    report = evaluate_bounds(params, convexity)
    return BoundTerms(diminishing=report.diminishing_term(n), post_convergence=report.post_convergence_term)


def measure_sigma_sq(updates: Sequence[ModelUpdate]) -> float:
    """
    Plug-in for ||sigma||^2 from one round of local updates.

    Computes sum_i mean_k (dw_k^(i) - dw^(i))^2 where dw is the device average.
    """
    stacked = np.vstack([u.values for u in updates])
    return float(np.sum(np.mean((stacked - stacked.mean(axis=0)) ** 2, axis=0)))


def bound_sweep(
    template: BoundParams,
    m_list: Iterable[int],
    rounds: Iterable[int],
    p_max: float,
    convexity: Convexity,
) -> pd.DataFrame:
    """
    Tabulate bound constants and values over retransmission counts and rounds.

    The template's channel is kept; for each M the optimal policy is recomputed.
    M values whose step size is inadmissible are skipped with a warning.

    Returns:
        pd.DataFrame: Columns M, n, c1, c2, c3, diminishing, post_convergence, total
    """
    rounds = list(rounds)
    records: List[dict] = []
    for num_retx in m_list:
        policy = solve_power_control(template.chan, p_max, num_retx)
        params = template.model_copy(update={"policy": policy})
        try:
            report = evaluate_bounds(params, convexity)
        except BoundError as e:
            logger.warning(f"Skipping M={num_retx}: {e}")
            continue
        for n in rounds:
            if convexity == "convex" and n < 1:
                continue
            diminishing = report.diminishing_term(n)
            records.append(
                {
                    "M": num_retx,
                    "n": n,
                    "c1": report.c1,
                    "c2": report.c2 if report.c2 is not None else np.nan,
                    "c3": report.c3,
                    "diminishing": diminishing,
                    "post_convergence": report.post_convergence_term,
                    "total": diminishing + report.post_convergence_term,
                }
            )
    return pd.DataFrame.from_records(records, columns=BOUND_SWEEP_COLUMNS)
