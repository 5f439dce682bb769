"""
Learner Service Module

This module runs federated learning over the analog uplink. Each round the
parameter server broadcasts W_n, every device runs E epochs of full-batch
gradient descent and forms DeltaW_k = (W_n - W_k(E)) / beta, the updates are
normalized and aggregated over the air with M transmissions, and the server
steps W_{n+1} = W_n - beta * DeltaW_hat.

The service includes:
- Local training, the global step and held-out evaluation
- Training tasks for the synthetic quadratic problem and for MLPs on datasets
- The AirReComp training loop with budget-limited round counts
"""

import logging
import time
from typing import List, Optional, Tuple

import numpy as np

from app.core.errors import DimensionError, NumericalError
from app.models.learning import (
    Dataset,
    GlobalModel,
    LocalProblem,
    ModelUpdate,
    Shard,
    TaskKind,
    TraceRow,
    TrainingSetup,
    TrainingTrace,
)
from app.services.aircomp_service import aggregate_uplink, denormalize, normalize, passthrough
from app.services.bounds_service import measure_sigma_sq
from app.services.channel_service import FadingProcess
from app.services.data_service import QuadraticFLProblem
from app.services.mlp import MLP, MLPObjective
from app.services.power_control_service import solve_power_control, solve_power_control_unaware
from app.services.selection_service import rounds_for

# Configure logger
logger = logging.getLogger(__name__)


def local_train(model: GlobalModel, prob: LocalProblem) -> ModelUpdate:
    """
    Run E full-batch gradient-descent epochs from the global model.

    Args:
        model: Broadcast global model W_n
        prob: Local objective, epochs and step size

    Returns:
        ModelUpdate: (W_n - W_k(E)) / beta; equals the gradient at W_n when E = 1

    Raises:
        NumericalError: If a gradient or iterate becomes non-finite
    """
    weights = np.array(model.weights, dtype=np.float64)
    for epoch in range(prob.epochs):
        gradient = np.asarray(prob.objective.gradient(weights), dtype=np.float64)
        if gradient.shape != weights.shape:
            raise DimensionError(
                f"device {prob.device_id}: gradient shape {gradient.shape} does not match "
                f"model shape {weights.shape}"
            )
        if not np.all(np.isfinite(gradient)):
            raise NumericalError(
                f"non-finite gradient on device {prob.device_id} "
                f"(round {model.round}, epoch {epoch + 1})"
            )
        weights = weights - prob.step_size * gradient

    return ModelUpdate(values=(model.weights - weights) / prob.step_size, device_id=prob.device_id)


def global_step(model: GlobalModel, estimated_update: ModelUpdate, beta: float) -> GlobalModel:
    """
    Apply W_{n+1} = W_n - beta * DeltaW_hat.

    Raises:
        DimensionError: If the update length differs from the model
        NumericalError: If the new weights are not finite
    """
    if estimated_update.dim != model.dim:
        raise DimensionError(f"update has {estimated_update.dim} entries, model has {model.dim}")
    weights = model.weights - beta * estimated_update.values
    if not np.all(np.isfinite(weights)):
        raise NumericalError(f"global model diverged at round {model.round + 1}")
    return GlobalModel(weights=weights, round=model.round + 1)


def score_predictions(predictions: np.ndarray, targets: np.ndarray, task: TaskKind) -> float:
    """
    Accuracy for classification, normalized MSE (MSE / var(target)) for regression.

    Raises:
        DimensionError: If the test set is empty
    """
    targets = np.asarray(targets)
    if targets.size == 0:
        raise DimensionError("cannot evaluate on an empty test set")
    if task == "classification":
        return float(np.mean(np.asarray(predictions) == targets))
    variance = float(np.var(targets))
    mse = float(np.mean((np.asarray(predictions, dtype=np.float64) - targets) ** 2))
    if variance == 0:
        return 0.0 if mse == 0 else float("inf")
    return mse / variance


def eval_model(model: GlobalModel, test_set: Dataset, mlp: MLP) -> float:
    """Score the global model on held-out data (accuracy or normalized MSE)."""
    if len(test_set) == 0:
        raise DimensionError("cannot evaluate on an empty test set")
    predictions = mlp.predict(model.weights, test_set.features)
    return score_predictions(predictions, test_set.targets, test_set.task)


class QuadraticTask:
    """
    Training task on a QuadraticFLProblem.

    Loss is the global objective F(W_n) and the metric is the loss gap
    F(W_n) - F(W*).
    """

    kind: TaskKind = "quadratic"

    def __init__(self, problem: QuadraticFLProblem, initial: Optional[np.ndarray] = None):
        self.problem = problem
        self.initial = np.zeros(problem.dim) if initial is None else np.asarray(initial, dtype=np.float64)

    def initial_weights(self, rng: np.random.Generator) -> np.ndarray:
        return self.initial.copy()

    def local_problems(self, rng: np.random.Generator, beta: float, epochs: int) -> List[LocalProblem]:
        return [
            LocalProblem(kind="quadratic", objective=objective, epochs=epochs, step_size=beta, device_id=k)
            for k, objective in enumerate(self.problem.device_objectives(rng))
        ]

    def evaluate(self, weights: np.ndarray) -> Tuple[float, float]:
        return self.problem.global_loss(weights), self.problem.loss_gap(weights)


class SupervisedTask:
    """
    Training task for an MLP on per-device shards.

    Loss is the average training loss over the shards and the metric is
    accuracy or normalized MSE on the held-out set. A fixed ``initial`` vector
    makes every run of the task start from the same weights.
    """

    def __init__(
        self,
        mlp: MLP,
        shards: List[Shard],
        test_set: Dataset,
        initial: Optional[np.ndarray] = None,
    ):
        self.mlp = mlp
        self.initial = None if initial is None else np.asarray(initial, dtype=np.float64)
        self.shards = shards
        self.test_set = test_set
        self.kind: TaskKind = mlp.spec.task
        self._objectives = [MLPObjective(mlp, shard) for shard in shards]

    def initial_weights(self, rng: np.random.Generator) -> np.ndarray:
        if self.initial is not None:
            return self.initial.copy()
        return self.mlp.init_weights(rng)

    def local_problems(self, rng: np.random.Generator, beta: float, epochs: int) -> List[LocalProblem]:
        return [
            LocalProblem(kind=self.kind, objective=objective, epochs=epochs, step_size=beta, device_id=shard.device_id)
            for objective, shard in zip(self._objectives, self.shards)
        ]

    def evaluate(self, weights: np.ndarray) -> Tuple[float, float]:
        loss = float(np.mean([objective.loss(weights) for objective in self._objectives]))
        model = GlobalModel(weights=weights)
        return loss, eval_model(model, self.test_set, self.mlp)


def run_airrecomp(
    task,
    setup: TrainingSetup,
    fading: FadingProcess,
    rng: np.random.Generator,
) -> TrainingTrace:
    """
    Train with over-the-air aggregation and M transmissions per round.

    Args:
        task: QuadraticTask or SupervisedTask
        setup: Step size, epochs, M, power settings and cost model
        fading: Channel state per round (K must match the task's devices)
        rng: Generator for initialization, target jitter and channel noise

    Returns:
        TrainingTrace: One row per completed round; rounds stop once the next
            round would exceed the budget
    """
    start_time = time.time()
    cost = setup.cost
    round_cost = cost.round_cost(setup.num_retx)
    affordable = rounds_for(cost, setup.num_retx)
    num_rounds = setup.num_rounds or affordable
    if num_rounds > affordable:
        logger.warning(
            f"Requested {num_rounds} rounds but the budget {cost.budget:g} affords {affordable} "
            f"at M={setup.num_retx}; the trace is truncated"
        )
        num_rounds = affordable

    model = GlobalModel(weights=task.initial_weights(rng), round=0)
    trace = TrainingTrace()
    cumulative_cost = 0.0
    sigma_sq_max = 0.0

    for n in range(1, num_rounds + 1):
        chan = fading.realization(n - 1)
        problems = task.local_problems(rng, setup.beta, setup.epochs)
        if len(problems) != chan.num_devices:
            raise DimensionError(f"{len(problems)} devices train but the channel has {chan.num_devices}")

        updates = [local_train(model, problem) for problem in problems]
        encode = normalize if setup.normalize_updates else passthrough
        encoded = [encode(update) for update in updates]

        if setup.policy == "aware":
            policy = solve_power_control(chan, setup.p_max, setup.num_retx)
        else:
            policy = solve_power_control_unaware(chan, setup.p_max, setup.num_retx)

        aggregate = aggregate_uplink(encoded, policy, chan, setup.num_retx, rng)
        estimate = denormalize(aggregate, [(e.mean, e.std) for e in encoded])
        model = global_step(model, estimate, setup.beta)

        sigma_sq_max = max(sigma_sq_max, measure_sigma_sq(updates))
        cumulative_cost += round_cost
        loss, metric = task.evaluate(model.weights)
        trace.rows.append(
            TraceRow(
                round=n,
                loss=loss,
                metric=metric,
                cum_cost=cumulative_cost,
                num_retx=setup.num_retx,
                eta=policy.eta,
                seed=setup.seed,
            )
        )
        logger.debug(f"Round {n}/{num_rounds} M={setup.num_retx}: loss={loss:.6g} metric={metric:.6g}")

    trace.sigma_sq_max = sigma_sq_max
    trace.final_weights = model.weights
    elapsed_time = (time.time() - start_time) * 1000
    logger.info(
        f"AirReComp run (M={setup.num_retx}, seed={setup.seed}) finished "
        f"{len(trace)} rounds in {elapsed_time:.2f}ms"
    )
    return trace
