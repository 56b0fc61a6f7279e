from __future__ import annotations

import json
from pathlib import Path

import pytest

from src.config_loader import (
    experiment_config_from_dict,
    experiment_config_to_dict,
    load_experiment_config,
    load_si_failure_config,
)
from src.config_schema import ExperimentConfig, PCRConfig
from src.env import SEED_ENV_VAR, resolve_seed


def test_empty_config_gives_defaults():
    cfg = experiment_config_from_dict({})
    assert cfg == ExperimentConfig()
    assert cfg.effective_delta_hat == cfg.delta_true
    assert cfg.effective_omega == (1.0, 1.0, 1.0)


def test_example_config_loads():
    cfg = load_experiment_config(Path(__file__).resolve().parent.parent / "example_config.json")
    assert cfg.units == "semi-synthetic"
    assert cfg.spec.T0 == 5 and cfg.spec.T == 8
    assert cfg.pcr.p == 3


def test_config_round_trips_through_dict():
    cfg = experiment_config_from_dict({"spec": {"k": 3}, "policy": "shifted-multi", "omega": [1, 2, 3], "seed": 4})
    assert experiment_config_from_dict(experiment_config_to_dict(cfg)) == cfg


@pytest.mark.parametrize(
    "raw,needle",
    [
        ({"m_train": "many"}, "m_train"),
        ({"spec": {"T0": 8, "T": 8}}, "spec.T0"),
        ({"omega": [1, 2]}, "omega"),
        ({"delta_true": 0}, "delta_true"),
        ({"policy": "oracle"}, "policy"),
        ({"spec": {"k": 3}}, "shifted-two"),
        ({"m_test": 1}, "m_test"),
        ({"units": "semi-synthetic", "spec": {"T0": 4}}, "semi-synthetic"),
        ({"pcr": {"p": 0}}, "pcr.p"),
    ],
)
def test_invalid_values_name_their_key(raw, needle):
    with pytest.raises(ValueError, match=needle):
        experiment_config_from_dict(raw)


def test_m_test_zero_is_allowed():
    assert experiment_config_from_dict({"m_test": 0}).m_test == 0


def test_config_file_must_hold_an_object(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(ValueError):
        load_experiment_config(path)
    with pytest.raises(FileNotFoundError):
        load_experiment_config(tmp_path / "missing.json")


def test_si_failure_config(tmp_path):
    path = tmp_path / "si.json"
    path.write_text(json.dumps({"delta": 0.5, "seed": 3}), encoding="utf-8")
    cfg = load_si_failure_config(path)
    assert cfg.delta == 0.5 and cfg.seed == 3 and cfg.m_test == 500


def test_pcr_config_validation():
    with pytest.raises(ValueError):
        PCRConfig(rho=-1.0)
    with pytest.raises(ValueError):
        PCRConfig(min_singular_ratio=1.0)


def test_seed_precedence(monkeypatch):
    monkeypatch.setenv(SEED_ENV_VAR, "9")
    assert resolve_seed(1, 2) == 1
    assert resolve_seed(None, 2) == 2
    assert resolve_seed(None, None) == 9
    monkeypatch.delenv(SEED_ENV_VAR)
    assert resolve_seed(None, None) == 0
    monkeypatch.setenv(SEED_ENV_VAR, "x")
    with pytest.raises(ValueError):
        resolve_seed(None, None)
    with pytest.raises(ValueError):
        resolve_seed(-1, None)
