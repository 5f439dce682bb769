"""
Tests for experiment configuration loading and the runtime settings.
"""

import pytest

from app.core.config import Settings
from app.core.errors import EXIT_CODES, ConfigError, DataFormatError, SimulationError
from app.models.experiment import ExperimentConfig, load_experiment_config


def test_overrides_replace_file_values(config_file):
    path = config_file({"kind": "mse-sweep", "seed": 1, "trials": 10, "channel": {"num_devices": 3}})
    config = load_experiment_config(path, {"seed": 5, "trials": None})
    assert config.seed == 5
    assert config.trials == 10
    assert config.channel.num_devices == 3


def test_toml_config(tmp_path):
    path = tmp_path / "experiment.toml"
    path.write_text(
        'kind = "select-m"\nseed = 2\n\n[cost]\ntrain_cost = 0\nuplink_cost = 1\nbudget = 30\n',
        encoding="utf-8",
    )
    config = load_experiment_config(str(path))
    assert config.cost.train_cost == 0
    assert config.cost.round_cost(3) == 3


def test_unparseable_file(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_experiment_config(str(path))


def test_invalid_values_are_config_errors():
    with pytest.raises(ConfigError):
        load_experiment_config(None, {"kind": "train", "seed": 1, "retransmission": {"m_list": [0]}})
    with pytest.raises(ConfigError):
        load_experiment_config(None, {"kind": "teleport", "seed": 1})


def test_resolved_trials_defaults():
    desk = ExperimentConfig(kind="mse-sweep", seed=0)
    full = ExperimentConfig(kind="mse-sweep", seed=0, full_scale=True)
    assert desk.resolved_trials() == 2000
    assert full.resolved_trials() == 20000
    assert ExperimentConfig(kind="train", seed=0, trials=3, full_scale=True).resolved_trials() == 3
    assert full.samples_per_device() == 6000


def test_config_hash_ignores_output():
    first = ExperimentConfig(kind="train", seed=0, output="a.csv")
    second = ExperimentConfig(kind="train", seed=0, output="b.csv")
    third = ExperimentConfig(kind="train", seed=1)
    assert first.config_hash() == second.config_hash()
    assert first.config_hash() != third.config_hash()
    assert len(first.config_hash()) == 16


def test_settings_from_environment(monkeypatch):
    monkeypatch.setenv("AIRRECOMP_WORKERS", "3")
    monkeypatch.setenv("AIRRECOMP_LOG_LEVEL", "debug")
    settings = Settings()
    assert settings.WORKERS == 3
    assert settings.LOG_LEVEL == "DEBUG"


def test_settings_reject_bad_log_level(monkeypatch):
    monkeypatch.setenv("AIRRECOMP_LOG_LEVEL", "chatty")
    with pytest.raises(ValueError):
        Settings()


def test_error_categories():
    error = DataFormatError("bad magic", offset=0)
    assert isinstance(error, SimulationError)
    assert str(error) == "bad magic (at byte offset 0)"
    assert EXIT_CODES[error.category] == 3
    assert EXIT_CODES[ConfigError("x").category] == 2
