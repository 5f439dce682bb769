"""
Training on the real MNIST files. Skipped unless AIRRECOMP_MNIST_DIR points at
a directory with the standard IDX files.
"""

import numpy as np
import pytest
from scipy import stats

from app.commands.experiment_commands import cmd_train
from app.core.config import settings
from app.models.experiment import load_experiment_config

pytestmark = pytest.mark.skipif(not settings.MNIST_DIR, reason="AIRRECOMP_MNIST_DIR is not set")


def test_mnist_accuracy_improves_with_rounds():
    config = load_experiment_config(
        None,
        {
            "kind": "train",
            "seed": 0,
            "trials": 1,
            "channel": {"num_devices": 10, "noise_variance": 0.01},
            "retransmission": {"m_list": [4]},
            "learner": {"problem": "mnist", "beta": 0.5, "epochs": 2},
            "data": {"samples_per_device": 300, "mnist_test_samples": 1000},
        },
    )
    mean, _ = cmd_train(config)
    assert len(mean) == 18
    assert mean["metric"].iloc[-1] > mean["metric"].iloc[0]
    assert mean["metric"].iloc[-1] > 0.3


def test_four_transmissions_not_worse_than_one_on_paired_seeds():
    """K = 10, sigma_z^2 = sqrt(2K), 20 paired seeds: final accuracy at M = 4 is not significantly below M = 1."""
    num_devices = 10
    config = load_experiment_config(
        None,
        {
            "kind": "train",
            "seed": 0,
            "trials": 20,
            "channel": {"num_devices": num_devices, "noise_variance": float(np.sqrt(2 * num_devices))},
            "retransmission": {"m_list": [1, 4]},
            "learner": {"problem": "mnist", "beta": 0.05, "epochs": 2},
            "data": {"samples_per_device": 600},
            "cost": {"train_cost": 4, "uplink_cost": 1, "budget": 150},
        },
    )
    _, per_seed = cmd_train(config)
    final = per_seed.sort_values("round").groupby(["M", "seed"])["metric"].last().unstack("M")
    result = stats.ttest_rel(final[4], final[1], alternative="less")
    assert result.pvalue > 0.05
