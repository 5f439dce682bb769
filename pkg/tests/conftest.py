"""
Pytest configuration file for AirReComp simulator tests.

This file contains fixtures shared across the test modules: seeded generators,
canonical channels and policies, small quadratic problems, an IDX fixture writer
and temporary experiment configs.
"""

import json
import os
import struct

import numpy as np
import pytest

from app.models.wireless import ChannelRealization, PowerPolicy
from app.services.data_service import IDX_IMAGE_MAGIC, IDX_LABEL_MAGIC, QuadraticFLProblem


def write_idx(path, array):
    """Write a uint8 array as an IDX file: (n, rows, cols) images or (n,) labels."""
    array = np.asarray(array, dtype=np.uint8)
    magic = IDX_IMAGE_MAGIC if array.ndim == 3 else IDX_LABEL_MAGIC
    header = struct.pack(f">{1 + array.ndim}I", magic, *array.shape)
    with open(path, "wb") as f:
        f.write(header + array.tobytes())


# Generator fixtures
@pytest.fixture
def rng():
    """Return a seeded generator."""
    return np.random.default_rng(12345)


# Channel and policy fixtures
@pytest.fixture
def unit_channel():
    """Two devices with unit gains and unit noise."""
    return ChannelRealization(gains=[1.0, 1.0], noise_variance=1.0)


@pytest.fixture
def two_device_channel():
    """Gains [0.5, 2] with unit noise."""
    return ChannelRealization(gains=[0.5, 2.0], noise_variance=1.0)


@pytest.fixture
def inverting_policy():
    """Policy with eta = 1 that inverts the unit channel."""
    return PowerPolicy(powers=[1.0, 1.0], eta=1.0, p_max=1.0, num_retx=1)


# Quadratic problem fixtures
@pytest.fixture
def two_anchor_problem():
    """F_k(w) = 1/2 (w - a_k)^2 with a = [1, 3]."""
    return QuadraticFLProblem.from_anchors([1.0, 3.0])


@pytest.fixture
def shifted_problem():
    """Four devices whose anchors differ by constant offsets, d = 6."""
    center = np.linspace(-1.0, 1.0, 6)
    offsets = np.array([-0.6, -0.1, 0.3, 0.8])
    return QuadraticFLProblem(center + offsets[:, None])


# File fixtures
@pytest.fixture
def idx_writer():
    """Return the test-only IDX writer."""
    return write_idx


@pytest.fixture
def mnist_fixture_dir(tmp_path):
    """Directory with a tiny fabricated MNIST train/test split (20 / 10 samples)."""
    generator = np.random.default_rng(7)
    for prefix, count in (("train", 20), ("t10k", 10)):
        images = generator.integers(0, 256, size=(count, 28, 28))
        labels = np.arange(count) % 10
        write_idx(tmp_path / f"{prefix}-images-idx3-ubyte", images)
        write_idx(tmp_path / f"{prefix}-labels-idx1-ubyte", labels)
    return tmp_path


@pytest.fixture
def config_file(tmp_path):
    """Write an experiment config dictionary to a JSON file and return its path."""

    def _write(payload, name="experiment.json"):
        path = tmp_path / name
        path.write_text(json.dumps(payload), encoding="utf-8")
        return str(path)

    return _write


# Environment setup and teardown
@pytest.fixture(autouse=True)
def setup_test_environment():
    """Run every test with in-process trials and restore the environment afterwards."""
    from app.core.config import settings

    original_env = os.environ.copy()
    original_workers = settings.WORKERS
    settings.WORKERS = 1

    yield

    settings.WORKERS = original_workers
    os.environ.clear()
    os.environ.update(original_env)
