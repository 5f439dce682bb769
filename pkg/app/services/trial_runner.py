"""
Trial Runner Module

Seeded fan-out of Monte-Carlo work. Every unit of work receives a generator
derived from (master seed, unit index) through numpy's SeedSequence, so results
are identical for any number of workers. Units run in a process pool when more
than one worker is configured and are reduced in index order.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, List, Optional, Sequence, Tuple

import numpy as np

from app.core.config import settings

# Configure logger
logger = logging.getLogger(__name__)


def spawn_rng(seed: int, *path: int) -> np.random.Generator:
    """Independent generator for the stream identified by (seed, *path)."""
    return np.random.default_rng(np.random.SeedSequence([seed, *path]))


def chunk_sizes(trials: int, chunk_size: int) -> List[int]:
    """Split ``trials`` into fixed-size chunks (the last one may be shorter)."""
    if trials < 1 or chunk_size < 1:
        raise ValueError(f"trials and chunk_size must be >= 1, got {trials} and {chunk_size}")
    full, rest = divmod(trials, chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


def _invoke(job: Tuple[Callable[..., Any], int, Tuple[int, ...], Tuple[Any, ...]]) -> Any:
    fn, seed, path, args = job
    return fn(spawn_rng(seed, *path), *args)


def run_jobs(
    fn: Callable[..., Any],
    seed: int,
    jobs: Sequence[Tuple[Tuple[int, ...], Tuple[Any, ...]]],
    workers: Optional[int] = None,
) -> List[Any]:
    """
    Run ``fn(rng, *args)`` for every (path, args) job, in job order.

    Args:
        fn: Picklable top-level callable
        seed: Master seed
        jobs: (stream path, extra arguments) per unit of work
        workers: Process count; defaults to settings.WORKERS, 1 runs in-process

    Returns:
        List of results in the order of ``jobs``
    """
    workers = workers or settings.WORKERS
    payload = [(fn, seed, tuple(path), tuple(args)) for path, args in jobs]
    if workers <= 1 or len(payload) <= 1:
        return [_invoke(job) for job in payload]
    logger.debug(f"Dispatching {len(payload)} jobs to {workers} workers")
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_invoke, payload))


def run_trials(
    fn: Callable[..., np.ndarray],
    seed: int,
    trials: int,
    stream: int = 0,
    args: Tuple[Any, ...] = (),
    chunk_size: Optional[int] = None,
    workers: Optional[int] = None,
) -> np.ndarray:
    """
    Evaluate ``fn(rng, size, *args)`` over ``trials`` trials in seeded chunks.

    ``stream`` separates independent experiments sharing one master seed
    (for example one stream per table cell).

    Returns:
        np.ndarray: Concatenated per-trial results in trial order
    """
    chunk_size = chunk_size or settings.TRIAL_CHUNK_SIZE
    jobs = [((stream, index), (size, *args)) for index, size in enumerate(chunk_sizes(trials, chunk_size))]
    return np.concatenate(run_jobs(fn, seed, jobs, workers))
