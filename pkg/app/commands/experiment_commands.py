"""
Experiment Commands Module

One function per CLI subcommand. Each takes a validated ExperimentConfig and
returns the table(s) to emit; run_experiment writes them with the report service.

Commands:
- mse-sweep: Monte-Carlo estimation MSE per (M, sigma_z) with optimal power control
- baseline-compare: retransmission-aware vs retransmission-unaware power control
- train: AirReComp training runs per M, mean traces plus per-seed traces
- select-m: retransmission count chosen under the cost budget
- sigma-sweep: selected M over a grid of noise standard deviations
- bound-validate: empirical loss gap on the quadratic problem against both bounds
"""

import itertools
import logging
import time
from functools import lru_cache
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from app.core.config import settings
from app.core.errors import ConfigError
from app.models.analysis import BoundParams
from app.models.experiment import ExperimentConfig
from app.models.learning import TRACE_COLUMNS, Dataset, MLPSpec, TrainingSetup
from app.models.wireless import ChannelRealization
from app.services.aircomp_service import estimate_mean_batch
from app.services.bounds_service import bound_sweep, check_step_size, evaluate_bounds
from app.services.channel_service import FadingProcess, draw_channel, draw_gain_matrix
from app.services.data_service import (
    QuadraticFLProblem,
    export_dataset_csv,
    load_mnist_dir,
    make_quadratic_problem,
    partition,
    subsample,
    synth_regression,
    train_test_split,
)
from app.services.learner_service import QuadraticTask, SupervisedTask, run_airrecomp
from app.services.mlp import MLP
from app.services.power_control_service import analytic_mse_batch, solve_power_control, solve_power_control_batch
from app.services.report_service import write_csv
from app.services.selection_service import (
    select_m_diminishing,
    select_m_full_bound,
    select_m_per_draw,
    sweep_sigma,
)
from app.services.trial_runner import run_jobs, run_trials, spawn_rng

# Configure logger
logger = logging.getLogger(__name__)

# Stream identifiers under the master seed
DATA_STREAM = 0
CHANNEL_STREAM = 1
NOISE_STREAM = 2

UNITS = {
    "mse-sweep": {"M": "count", "sigma_z": "amplitude", "mse_empirical": "power", "mse_analytic": "power"},
    "baseline-compare": {"M": "count", "sigma_z": "amplitude", "mse_aware": "power", "mse_unaware": "power"},
    "train": {"round": "count", "loss": "loss", "metric": "accuracy|nmse|gap", "cum_cost": "cost", "eta": "power"},
    "select-m": {"m_star": "count", "n_star": "rounds", "objective": "loss"},
    "sigma-sweep": {"sigma_z": "amplitude", "m_star": "count", "objective": "loss"},
    "bound-validate": {"n": "rounds", "empirical_gap": "loss", "bound": "loss"},
}


# ---------------------------------------------------------------------------
# Monte-Carlo MSE experiments


def _mse_chunk(
    rng: np.random.Generator,
    size: int,
    num_devices: int,
    noise_variance: float,
    p_max: float,
    num_retx: int,
) -> np.ndarray:
    gains = draw_gain_matrix(size, num_devices, rng)
    powers, eta = solve_power_control_batch(gains, noise_variance, p_max, num_retx)
    errors = estimate_mean_batch(gains, powers, eta, noise_variance, num_retx, rng)
    analytic = analytic_mse_batch(gains, powers, eta, noise_variance, num_retx)
    return np.column_stack([errors, analytic])


def _baseline_chunk(
    rng: np.random.Generator,
    size: int,
    num_devices: int,
    noise_variance: float,
    p_max: float,
    num_retx: int,
) -> np.ndarray:
    gains = draw_gain_matrix(size, num_devices, rng)
    # Both policies see the same symbols and noise
    draw_seed = int(rng.integers(2 ** 63))
    columns = []
    for design_retx in (num_retx, 1):
        powers, eta = solve_power_control_batch(gains, noise_variance, p_max, design_retx)
        draws = np.random.default_rng(draw_seed)
        columns.append(estimate_mean_batch(gains, powers, eta, noise_variance, num_retx, draws))
        columns.append(analytic_mse_batch(gains, powers, eta, noise_variance, num_retx))
    return np.column_stack(columns)


def _cells(config: ExperimentConfig) -> List[Tuple[int, int, float]]:
    """(stream, M, sigma_z) for every table cell."""
    grid = config.retransmission
    return [
        (stream, num_retx, sigma_z)
        for stream, (num_retx, sigma_z) in enumerate(itertools.product(grid.m_list, grid.sigma_z_grid))
    ]


def cmd_mse_sweep(config: ExperimentConfig) -> pd.DataFrame:
    """
    Empirical and analytic estimation MSE for each (M, sigma_z) cell.

    Returns:
        pd.DataFrame: Columns M, sigma_z, mse_empirical, mse_analytic, std_error, trials
    """
    trials = config.resolved_trials()
    records = []
    for stream, num_retx, sigma_z in _cells(config):
        start_time = time.time()
        results = run_trials(
            _mse_chunk,
            config.seed,
            trials,
            stream=stream,
            args=(config.channel.num_devices, sigma_z ** 2, config.power.p_max, num_retx),
        )
        errors, analytic = results[:, 0], results[:, 1]
        records.append(
            {
                "M": num_retx,
                "sigma_z": sigma_z,
                "mse_empirical": float(errors.mean()),
                "mse_analytic": float(analytic.mean()),
                "std_error": float(errors.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0,
                "trials": trials,
            }
        )
        logger.info(
            f"mse-sweep M={num_retx} sigma_z={sigma_z:g}: empirical={errors.mean():.6g} "
            f"analytic={analytic.mean():.6g} ({(time.time() - start_time) * 1000:.2f}ms)"
        )
    return pd.DataFrame.from_records(records)


def cmd_baseline_compare(config: ExperimentConfig) -> pd.DataFrame:
    """
    Aware vs unaware power control on common channel draws for each (M, sigma_z).

    Returns:
        pd.DataFrame: Columns M, sigma_z, mse_aware, mse_unaware, gap,
            analytic_aware, analytic_unaware, trials
    """
    trials = config.resolved_trials()
    records = []
    for stream, num_retx, sigma_z in _cells(config):
        results = run_trials(
            _baseline_chunk,
            config.seed,
            trials,
            stream=stream,
            args=(config.channel.num_devices, sigma_z ** 2, config.power.p_max, num_retx),
        )
        aware, analytic_aware, unaware, analytic_unaware = results.mean(axis=0)
        records.append(
            {
                "M": num_retx,
                "sigma_z": sigma_z,
                "mse_aware": float(aware),
                "mse_unaware": float(unaware),
                "gap": float(unaware - aware),
                "analytic_aware": float(analytic_aware),
                "analytic_unaware": float(analytic_unaware),
                "trials": trials,
            }
        )
        logger.info(f"baseline-compare M={num_retx} sigma_z={sigma_z:g}: gap={unaware - aware:.6g}")
    return pd.DataFrame.from_records(records)


# ---------------------------------------------------------------------------
# Training


def _resolve_mnist_dir(config: ExperimentConfig) -> Optional[str]:
    """MNIST directory for the mnist problem; None for generated problems."""
    if config.learner.problem != "mnist":
        return None
    directory = config.data.mnist_dir or settings.MNIST_DIR
    if not directory:
        raise ConfigError("the mnist problem needs data.mnist_dir or AIRRECOMP_MNIST_DIR")
    return directory


@lru_cache(maxsize=1)
def _mnist_splits(directory: str) -> Tuple[Dataset, Dataset]:
    # Loaded once per process; jobs carry only the directory
    return load_mnist_dir(directory, "train"), load_mnist_dir(directory, "test")


def build_task(config: ExperimentConfig, rng: np.random.Generator, mnist_dir: Optional[str] = None):
    """
    Build the training task of one trial.

    Args:
        config: Experiment configuration
        rng: Data stream of the trial (subsampling, partition, problem and weight initialization)
        mnist_dir: Directory of the MNIST IDX files, required for the mnist problem

    Raises:
        ConfigError: If the mnist problem has no directory
    """
    K = config.channel.num_devices
    learner = config.learner

    if learner.problem == "quadratic":
        bounds = config.bounds
        problem = make_quadratic_problem(K, bounds.dim, bounds.spread, rng, jitter=bounds.jitter)
        return QuadraticTask(problem)

    if learner.problem == "mnist":
        if not mnist_dir:
            raise ConfigError("the mnist problem needs data.mnist_dir or AIRRECOMP_MNIST_DIR")
        train_full, test_full = _mnist_splits(mnist_dir)
        train = subsample(train_full, K * config.samples_per_device(), rng)
        test = subsample(test_full, config.data.mnist_test_samples, rng)
        spec = MLPSpec(
            layer_sizes=[train.input_dim, learner.hidden, 10],
            activation=learner.activation,
            head="softmax_ce",
        )
    else:
        data = config.data
        full = synth_regression(data.regression_samples, data.regression_noise, rng)
        train, test = train_test_split(full, data.regression_test_samples, rng)
        spec = MLPSpec(
            layer_sizes=[train.input_dim, learner.hidden, 1],
            activation=learner.activation,
            head="linear_mse",
        )
    mlp = MLP(spec)
    shards = partition(train, K, rng)
    return SupervisedTask(mlp, shards, test, initial=mlp.init_weights(rng))


def _train_trial(
    rng: np.random.Generator,
    config: ExperimentConfig,
    mnist_dir: Optional[str],
    trial: int,
    num_retx: int,
) -> pd.DataFrame:
    # Data, starting weights and channels depend on the trial only, so every M sees the same draws
    task = build_task(config, spawn_rng(config.seed, DATA_STREAM, trial), mnist_dir)
    fading = FadingProcess(
        config.channel.num_devices,
        config.channel.noise_variance,
        spawn_rng(config.seed, CHANNEL_STREAM, trial),
        freeze=config.channel.freeze,
    )
    setup = TrainingSetup(
        num_retx=num_retx,
        beta=config.learner.beta,
        epochs=config.learner.epochs,
        p_max=config.power.p_max,
        policy=config.power.policy,
        normalize_updates=config.learner.normalize_updates,
        cost=config.cost,
        seed=trial,
    )
    return run_airrecomp(task, setup, fading, rng).to_frame()


def cmd_train(config: ExperimentConfig) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Run AirReComp for every M in the list with ``trials`` seeds each.

    With ``data.export_path`` set on the regression problem, the generated
    dataset of the first trial is also written there as CSV.

    Returns:
        Tuple containing:
            - mean traces per (M, round), columns round, loss, metric, cum_cost, M, eta, seed, trials
            - per-seed traces with the TrainingTrace columns
    """
    trials = config.resolved_trials()
    mnist_dir = _resolve_mnist_dir(config)
    if mnist_dir:
        # Surface format errors before any job starts
        _mnist_splits(mnist_dir)
    if config.data.export_path and config.learner.problem == "regression":
        export_regression_dataset(config, config.data.export_path)

    jobs = [
        ((NOISE_STREAM, trial, num_retx), (config, mnist_dir, trial, num_retx))
        for num_retx in config.retransmission.m_list
        for trial in range(trials)
    ]
    start_time = time.time()
    frames = run_jobs(_train_trial, config.seed, jobs)
    per_seed = pd.concat(frames, ignore_index=True)[TRACE_COLUMNS]

    grouped = per_seed.groupby(["M", "round"], sort=True)
    mean = grouped[["loss", "metric", "cum_cost", "eta"]].mean().reset_index()
    mean["seed"] = config.seed
    mean["trials"] = grouped.size().values
    mean = mean[TRACE_COLUMNS + ["trials"]]

    logger.info(
        f"train: {len(jobs)} runs over M={config.retransmission.m_list} "
        f"in {(time.time() - start_time) * 1000:.2f}ms"
    )
    return mean, per_seed


def export_regression_dataset(config: ExperimentConfig, path: str) -> Dataset:
    """Write the synthetic regression dataset that trial 0 trains and tests on."""
    data = config.data
    rng = spawn_rng(config.seed, DATA_STREAM, 0)
    dataset = synth_regression(data.regression_samples, data.regression_noise, rng)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    export_dataset_csv(dataset, path)
    return dataset


# ---------------------------------------------------------------------------
# Retransmission-count selection


def _selection_channels(config: ExperimentConfig) -> List[ChannelRealization]:
    rng = spawn_rng(config.seed, CHANNEL_STREAM)
    gains = draw_gain_matrix(config.selection.channel_draws, config.channel.num_devices, rng)
    return [ChannelRealization(gains=g, noise_variance=config.channel.noise_variance) for g in gains]


def _quadratic_bound_params(
    config: ExperimentConfig,
    chan: ChannelRealization,
    problem: QuadraticFLProblem,
    beta: float,
) -> BoundParams:
    policy = solve_power_control(chan, config.power.p_max, 1)
    return BoundParams(
        mu=problem.mu,
        L=problem.L,
        beta=beta,
        sigma_bound_sq=problem.sigma_bound_sq,
        d=problem.dim,
        r0_sq=problem.r0_sq(np.zeros(problem.dim)),
        policy=policy,
        chan=chan,
    )


def _selection_row(label: str, result) -> Dict[str, object]:
    row = {"draw": label, "proxy": result.proxy, "m_star": result.m_star, "n_star": result.n_star}
    row.update({f"objective_M{m}": value for m, value in sorted(result.objectives.items())})
    return row


def cmd_select_m(config: ExperimentConfig) -> pd.DataFrame:
    """
    Select M under the cost budget.

    The diminishing-term proxy averages over ``selection.channel_draws`` draws
    (or reports one row per draw with ``per_draw``). The full-bound proxy uses a
    quadratic problem with K = channel.num_devices and the bounds section's
    dimension, spread and jitter.

    Returns:
        pd.DataFrame: Columns draw, proxy, m_star, n_star, objective_M1 ...
    """
    selection = config.selection
    channels = _selection_channels(config)

    if selection.proxy == "diminishing":
        if selection.per_draw:
            results = select_m_per_draw(
                config.cost, channels, config.power.p_max, config.learner.beta, selection.m_max
            )
            rows = [_selection_row(str(i), r) for i, r in enumerate(results)]
        else:
            result = select_m_diminishing(
                config.cost, channels, config.power.p_max, config.learner.beta, selection.m_max
            )
            rows = [_selection_row("mean", result)]
    else:
        bounds = config.bounds
        problem = make_quadratic_problem(
            config.channel.num_devices,
            bounds.dim,
            bounds.spread,
            spawn_rng(config.seed, DATA_STREAM),
            jitter=bounds.jitter,
        )
        draws = channels if selection.per_draw else channels[:1]
        rows = []
        for index, chan in enumerate(draws):
            params = _quadratic_bound_params(config, chan, problem, config.learner.beta)
            result = select_m_full_bound(config.cost, params, selection.convexity, selection.m_max)
            rows.append(_selection_row(str(index), result))

    frame = pd.DataFrame.from_records(rows)
    logger.info(f"select-m ({selection.proxy}): M* values {frame['m_star'].tolist()}")
    return frame


def cmd_sigma_sweep(config: ExperimentConfig) -> pd.DataFrame:
    """Draw-averaged selected M per sigma_z (columns sigma_z, m_star, n_star, objective_M...)."""
    return sweep_sigma(
        config.cost,
        config.channel.num_devices,
        config.power.p_max,
        config.learner.beta,
        config.retransmission.sigma_z_grid,
        spawn_rng(config.seed, CHANNEL_STREAM),
        channel_draws=config.selection.channel_draws,
        m_max=config.selection.m_max,
    )


# ---------------------------------------------------------------------------
# Bound validation


def _bound_trial(
    rng: np.random.Generator,
    problem: QuadraticFLProblem,
    chan: ChannelRealization,
    setup: TrainingSetup,
) -> Tuple[np.ndarray, float]:
    fading = FadingProcess(chan.num_devices, chan.noise_variance, rng, fixed=chan)
    trace = run_airrecomp(QuadraticTask(problem), setup, fading, rng)
    return np.array([row.metric for row in trace.rows]), trace.sigma_sq_max


def cmd_bound_validate(config: ExperimentConfig) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Compare the empirical loss gap on the quadratic problem with both bounds.

    The problem and channel are drawn once and shared by all seeds; updates are
    sent without normalization and local training runs one epoch. One common
    step size, ``bounds.beta_fraction`` times the smallest admissible supremum
    over the M list, is used for every M.

    Returns:
        Tuple containing:
            - validation table, columns M, n, beta, empirical_gap, std_error,
              bound_strongly_convex, bound_convex, measured_sigma_sq, dominated
            - bound sweep at the common step size, columns convexity, M, n, c1, c2, c3,
              diminishing, post_convergence, total
    """
    bounds = config.bounds
    trials = config.resolved_trials()
    setup_rng = spawn_rng(config.seed, DATA_STREAM)
    problem = make_quadratic_problem(bounds.num_devices, bounds.dim, bounds.spread, setup_rng, jitter=bounds.jitter)
    chan = draw_channel(bounds.num_devices, setup_rng, bounds.noise_variance)

    # Step 1: common admissible step size
    templates = {}
    suprema = []
    for num_retx in config.retransmission.m_list:
        params = _quadratic_bound_params(config, chan, problem, beta=1.0)
        params = params.model_copy(update={"policy": solve_power_control(chan, config.power.p_max, num_retx)})
        templates[num_retx] = params
        suprema.extend(check_step_size(params, kind).supremum for kind in ("strongly_convex", "convex"))
    beta = bounds.beta_fraction * min(suprema)
    logger.info(f"bound-validate: beta={beta:.6g}, ||sigma||^2={problem.sigma_bound_sq:.6g}")

    # Step 2: Monte-Carlo runs and bound evaluation per M
    records = []
    for num_retx, template in templates.items():
        params = template.model_copy(update={"beta": beta})
        strongly_convex = evaluate_bounds(params, "strongly_convex")
        convex = evaluate_bounds(params, "convex")
        setup = TrainingSetup(
            num_retx=num_retx,
            beta=beta,
            epochs=1,
            p_max=config.power.p_max,
            normalize_updates=False,
            cost={"train_cost": 0.0, "uplink_cost": 1.0, "budget": float(bounds.rounds * num_retx)},
            num_rounds=bounds.rounds,
        )
        jobs = [((NOISE_STREAM, num_retx, trial), (problem, chan, setup)) for trial in range(trials)]
        outcomes = run_jobs(_bound_trial, config.seed, jobs)
        gaps = np.vstack([gap for gap, _ in outcomes])
        sigma_measured = max(sigma for _, sigma in outcomes)

        mean_gap = gaps.mean(axis=0)
        std_error = gaps.std(axis=0, ddof=1) / np.sqrt(trials) if trials > 1 else np.zeros_like(mean_gap)
        for index, n in enumerate(range(1, bounds.rounds + 1)):
            bound_sc = strongly_convex.total(n)
            bound_cvx = convex.total(n)
            records.append(
                {
                    "M": num_retx,
                    "n": n,
                    "beta": beta,
                    "empirical_gap": float(mean_gap[index]),
                    "std_error": float(std_error[index]),
                    "bound_strongly_convex": bound_sc,
                    "bound_convex": bound_cvx,
                    "measured_sigma_sq": sigma_measured,
                    "dominated": bool(mean_gap[index] - 3 * std_error[index] <= min(bound_sc, bound_cvx)),
                }
            )
        logger.info(f"bound-validate M={num_retx}: final gap {mean_gap[-1]:.6g}")

    # Step 3: bound constants and terms at the common step size
    template = next(iter(templates.values())).model_copy(update={"beta": beta})
    rounds = range(1, bounds.rounds + 1)
    sweep = pd.concat(
        [
            bound_sweep(template, config.retransmission.m_list, rounds, config.power.p_max, kind).assign(convexity=kind)
            for kind in ("strongly_convex", "convex")
        ],
        ignore_index=True,
    )
    sweep = sweep[["convexity"] + [c for c in sweep.columns if c != "convexity"]]
    return pd.DataFrame.from_records(records), sweep


# ---------------------------------------------------------------------------
# Dispatch


COMMANDS: Dict[str, Callable[[ExperimentConfig], object]] = {
    "mse-sweep": cmd_mse_sweep,
    "baseline-compare": cmd_baseline_compare,
    "train": cmd_train,
    "select-m": cmd_select_m,
    "sigma-sweep": cmd_sigma_sweep,
    "bound-validate": cmd_bound_validate,
}


# Second table per command, written next to --out as <stem>.<label>.csv
COMPANIONS = {
    "train": ("traces", UNITS["train"]),
    "bound-validate": ("bounds", {"M": "count", "n": "rounds", "c1": "ratio", "total": "loss"}),
}


def companion_path(output: str, label: str) -> str:
    """Companion file path: results/train.csv -> results/train.traces.csv."""
    path = Path(output)
    return str(path.with_name(f"{path.stem}.{label}{path.suffix or '.csv'}"))


def run_experiment(config: ExperimentConfig) -> None:
    """Run the configured command and write its CSV output(s)."""
    start_time = time.time()
    logger.info(f"Running {config.kind} (seed={config.seed}, trials={config.resolved_trials()})")
    result = COMMANDS[config.kind](config)
    config_hash = config.config_hash()
    units = UNITS[config.kind]

    if config.kind in COMPANIONS:
        main_table, companion = result
        write_csv(main_table, config.output, config.kind, config_hash, units)
        if config.output is not None:
            label, companion_units = COMPANIONS[config.kind]
            write_csv(companion, companion_path(config.output, label), config.kind, config_hash, companion_units)
    else:
        write_csv(result, config.output, config.kind, config_hash, units)

    logger.info(f"{config.kind} finished in {(time.time() - start_time) * 1000:.2f}ms")
