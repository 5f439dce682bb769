"""
Data Service Module

This module loads and partitions the datasets used by the simulator.

The service includes:
- An MNIST loader for the big-endian IDX format (plain or gzip-compressed)
- A synthetic 5-feature regression generator standing in for a water-quality dataset
- Train/test splitting and iid-equal partitioning across devices
- Synthetic quadratic federated problems with a known optimum
- CSV export of datasets for inspection
"""

import gzip
import logging
import struct
from pathlib import Path
from typing import List, Literal, Optional

import numpy as np
import pandas as pd

from app.core.errors import DataFormatError, DimensionError
from app.models.learning import Dataset, Shard

# Configure logger
logger = logging.getLogger(__name__)

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049


def _read_idx_bytes(path: str) -> bytes:
    file_path = Path(path)
    if not file_path.exists():
        raise DataFormatError(f"IDX file not found: {path}", offset=0)
    opener = gzip.open if file_path.suffix == ".gz" else open
    with opener(file_path, "rb") as f:
        return f.read()


def _unpack_header(raw: bytes, path: str, expected_magic: int, num_dims: int):
    header_size = 4 * (1 + num_dims)
    if len(raw) < header_size:
        raise DataFormatError(f"{path}: truncated header", offset=len(raw))
    magic, *dims = struct.unpack(f">{1 + num_dims}I", raw[:header_size])
    if magic != expected_magic:
        raise DataFormatError(
            f"{path}: magic number mismatch (expected {expected_magic}, got {magic})", offset=0
        )
    return dims, header_size


def load_idx_images(path: str) -> np.ndarray:
    """Read an IDX image file into an (n, rows*cols) float matrix scaled to [0, 1]."""
    raw = _read_idx_bytes(path)
    (count, rows, cols), offset = _unpack_header(raw, path, IDX_IMAGE_MAGIC, 3)
    expected = offset + count * rows * cols
    if len(raw) < expected:
        raise DataFormatError(
            f"{path}: truncated pixel data ({count} images of {rows}x{cols} declared)",
            offset=len(raw),
        )
    pixels = np.frombuffer(raw, dtype=np.uint8, count=count * rows * cols, offset=offset)
    return pixels.reshape(count, rows * cols).astype(np.float64) / 255.0


def load_idx_labels(path: str) -> np.ndarray:
    """Read an IDX label file into an integer vector."""
    raw = _read_idx_bytes(path)
    (count,), offset = _unpack_header(raw, path, IDX_LABEL_MAGIC, 1)
    if len(raw) < offset + count:
        raise DataFormatError(f"{path}: truncated labels ({count} declared)", offset=len(raw))
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=offset).astype(np.int64)


def load_mnist_idx(images_path: str, labels_path: str) -> Dataset:
    """
    Load an MNIST split from IDX files.

    Args:
        images_path: IDX3 image file (magic 0x00000803), optionally .gz
        labels_path: IDX1 label file (magic 0x00000801), optionally .gz

    Returns:
        Dataset: Flattened images scaled to [0, 1] with labels 0..9

    Raises:
        DataFormatError: On bad magic, truncation or a count mismatch, with the byte offset
    """
    features = load_idx_images(images_path)
    labels = load_idx_labels(labels_path)
    if features.shape[0] != labels.shape[0]:
        raise DataFormatError(
            f"{images_path} holds {features.shape[0]} images but {labels_path} "
            f"holds {labels.shape[0]} labels",
            offset=4,
        )
    logger.info(f"Loaded {features.shape[0]} MNIST samples of dim {features.shape[1]} from {images_path}")
    return Dataset(features=features, targets=labels, task="classification")


def load_mnist_dir(directory: str, split: Literal["train", "test"] = "train") -> Dataset:
    """Load the standard MNIST file pair for ``split`` from a directory (plain or .gz)."""
    prefix = "train" if split == "train" else "t10k"
    base = Path(directory)
    for suffix in ("", ".gz"):
        images = base / f"{prefix}-images-idx3-ubyte{suffix}"
        labels = base / f"{prefix}-labels-idx1-ubyte{suffix}"
        if images.exists() and labels.exists():
            return load_mnist_idx(str(images), str(labels))
    raise DataFormatError(f"No MNIST {split} files found in {directory}", offset=0)


def regression_target(features: np.ndarray) -> np.ndarray:
    """Smooth nonlinear response used by the synthetic regression generator."""
    x = features
    return 1.5 * x[:, 0] + np.sin(x[:, 1]) + 0.5 * x[:, 2] * x[:, 3] - 0.3 * x[:, 4] ** 2


def synth_regression(n: int, noise: float, rng: np.random.Generator) -> Dataset:
    """
    Generate a 5-feature regression dataset.

    Features are standard normal and then standardized column-wise; the target is
    ``regression_target(x)`` plus N(0, noise^2).

    Args:
        n: Number of samples
        noise: Standard deviation of the additive target noise
        rng: Seeded generator

    Returns:
        Dataset: Regression dataset with 5 features
    """
    if n < 1:
        raise DimensionError(f"n must be >= 1, got {n}")
    raw = rng.standard_normal((n, 5))
    std = raw.std(axis=0)
    features = (raw - raw.mean(axis=0)) / np.where(std > 0, std, 1.0)
    targets = regression_target(features) + noise * rng.standard_normal(n)
    return Dataset(features=features, targets=targets, task="regression")


def train_test_split(dataset: Dataset, test_size: int, rng: np.random.Generator):
    """Randomly hold out ``test_size`` samples; returns (train, test)."""
    if not 1 <= test_size < len(dataset):
        raise DimensionError(f"test_size must be in [1, {len(dataset) - 1}], got {test_size}")
    order = rng.permutation(len(dataset))
    test_idx, train_idx = order[:test_size], order[test_size:]
    return (
        Dataset(features=dataset.features[train_idx], targets=dataset.targets[train_idx], task=dataset.task),
        Dataset(features=dataset.features[test_idx], targets=dataset.targets[test_idx], task=dataset.task),
    )


def subsample(dataset: Dataset, size: int, rng: np.random.Generator) -> Dataset:
    """Random subset of ``size`` samples (the whole dataset if it is not larger)."""
    if size >= len(dataset):
        return dataset
    idx = np.sort(rng.choice(len(dataset), size=size, replace=False))
    return Dataset(features=dataset.features[idx], targets=dataset.targets[idx], task=dataset.task)


def partition(
    dataset: Dataset,
    num_devices: int,
    rng: np.random.Generator,
    scheme: Literal["iid-equal"] = "iid-equal",
) -> List[Shard]:
    """
    Split a dataset into disjoint device shards.

    The iid-equal scheme shuffles and cuts into K nearly equal chunks; the
    first n mod K shards get one extra sample.

    Raises:
        DimensionError: If K < 1 or K > n
    """
    if scheme != "iid-equal":
        raise DimensionError(f"Unsupported partition scheme: {scheme}")
    n = len(dataset)
    if not 1 <= num_devices <= n:
        raise DimensionError(f"cannot split {n} samples across {num_devices} devices")
    order = rng.permutation(n)
    shards = [
        Shard(
            features=dataset.features[idx],
            targets=dataset.targets[idx],
            task=dataset.task,
            device_id=k,
        )
        for k, idx in enumerate(np.array_split(order, num_devices))
    ]
    logger.debug(f"Partitioned {n} samples into shards of sizes {[len(s) for s in shards]}")
    return shards


def export_dataset_csv(dataset: Dataset, path: str) -> None:
    """Write features as x0..x{D-1} plus a ``target`` column."""
    frame = pd.DataFrame(
        dataset.features, columns=[f"x{i}" for i in range(dataset.input_dim)]
    )
    frame["target"] = dataset.targets
    frame.to_csv(path, index=False, float_format="%.12g", lineterminator="\n")
    logger.info(f"Exported {len(dataset)} samples to {path}")


class QuadraticDeviceObjective:
    """F_k(w) = 1/2 ||w - a||^2 for a fixed target a."""

    def __init__(self, target: np.ndarray):
        self.target = np.asarray(target, dtype=np.float64)

    def loss(self, weights: np.ndarray) -> float:
        return 0.5 * float(np.sum((weights - self.target) ** 2))

    def gradient(self, weights: np.ndarray) -> np.ndarray:
        return weights - self.target


class QuadraticFLProblem:
    """
    Federated quadratic problem with per-device losses F_k(w) = 1/2 ||w - a_k||^2.

    Device targets are fixed anchors a_k, optionally redrawn every round as
    a_k + jitter * xi with xi ~ N(0, I). The global loss is the device average
    of the expected local losses, so its minimizer is mean(a_k) and mu = L = 1.
    """

    mu = 1.0
    L = 1.0

    def __init__(self, anchors: np.ndarray, jitter: float = 0.0):
        anchors = np.atleast_2d(np.asarray(anchors, dtype=np.float64))
        self.anchors = anchors
        self.jitter = float(jitter)
        self.num_devices, self.dim = anchors.shape
        self.optimum = anchors.mean(axis=0)

    @classmethod
    def from_anchors(cls, anchors, jitter: float = 0.0) -> "QuadraticFLProblem":
        """Build a problem from explicit (K, d) anchors; a flat list means d = 1."""
        anchors = np.asarray(anchors, dtype=np.float64)
        if anchors.ndim == 1:
            anchors = anchors[:, None]
        return cls(anchors, jitter)

    @property
    def sigma_bound_sq(self) -> float:
        """||sigma||^2: anchor spread around the optimum plus d * jitter^2."""
        spread = float(np.sum(np.mean((self.anchors - self.optimum) ** 2, axis=0)))
        return spread + self.dim * self.jitter ** 2

    def device_targets(self, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        """Per-round targets; anchors unchanged when jitter is 0 or no generator is given."""
        if self.jitter == 0 or rng is None:
            return self.anchors
        return self.anchors + self.jitter * rng.standard_normal(self.anchors.shape)

    def device_objectives(self, rng: Optional[np.random.Generator] = None) -> List[QuadraticDeviceObjective]:
        return [QuadraticDeviceObjective(a) for a in self.device_targets(rng)]

    def global_loss(self, weights: np.ndarray) -> float:
        """(1/K) sum_k E[F_k(w)], including the jitter variance."""
        w = np.asarray(weights, dtype=np.float64)
        fit = 0.5 * float(np.mean(np.sum((w - self.anchors) ** 2, axis=1)))
        return fit + 0.5 * self.dim * self.jitter ** 2

    def global_gradient(self, weights: np.ndarray) -> np.ndarray:
        return np.asarray(weights, dtype=np.float64) - self.optimum

    def loss_gap(self, weights: np.ndarray) -> float:
        """F(w) - F(W*) = 1/2 ||w - W*||^2."""
        return 0.5 * float(np.sum((np.asarray(weights) - self.optimum) ** 2))

    def r0_sq(self, initial: np.ndarray) -> float:
        return float(np.sum((np.asarray(initial) - self.optimum) ** 2))


def make_quadratic_problem(
    num_devices: int,
    dim: int,
    spread: float,
    rng: np.random.Generator,
    jitter: float = 0.0,
    layout: Literal["gaussian", "shifted"] = "gaussian",
) -> QuadraticFLProblem:
    """
    Draw a quadratic federated problem.

    Args:
        num_devices: Number of devices K
        dim: Model dimension d
        spread: Scale of the anchor heterogeneity (0 makes all anchors equal)
        rng: Seeded generator
        jitter: Per-round target noise (standard deviation per coordinate)
        layout: "gaussian" draws anchors c + spread * N(0, I); "shifted" uses
            c + spread * s_k * 1 with scalar s_k ~ N(0, 1), so all devices share
            one update standard deviation

    Returns:
        QuadraticFLProblem: Problem with known optimum and mu = L = 1
    """
    if num_devices < 1 or dim < 1:
        raise DimensionError(f"need K >= 1 and d >= 1, got K={num_devices}, d={dim}")
    center = rng.standard_normal(dim)
    if layout == "shifted":
        offsets = spread * rng.standard_normal(num_devices)[:, None] * np.ones(dim)
    else:
        offsets = spread * rng.standard_normal((num_devices, dim))
    problem = QuadraticFLProblem(center + offsets, jitter)
    logger.debug(
        f"Quadratic problem K={num_devices} d={dim} spread={spread} jitter={jitter}: "
        f"||sigma||^2={problem.sigma_bound_sq:.4g}"
    )
    return problem
