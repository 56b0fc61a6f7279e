from __future__ import annotations

import json

import numpy as np
import pytest

from src.codec import (
    betaset_from_dict,
    betaset_to_dict,
    metrics_to_dict,
    policy_from_dict,
    policy_to_dict,
    separation_report_to_dict,
)
from src.config_schema import ExperimentConfig, SpecParams
from src.errors import ValidationError
from src.geometry import separation_of_types
from src.harness import run_experiment
from src.panel_model import PanelDataset
from src.policies import MinIndexMembership, Naive, ShiftedMulti, ShiftedTwo, SyntheticInterventions
from src.rewards import BetaSet, RewardWeights


def _policies(three_betas):
    data = PanelDataset(
        y_pre=np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]]),
        assigned=np.array([0, 0, 1, 1]),
        y_post=np.array([[0.5], [0.1], [0.2], [0.4]]),
        k=2,
    )
    return [
        ShiftedTwo(np.array([0.0, 0.0]), np.array([2.0, 0.5]), 0.3),
        ShiftedMulti(three_betas, 0.5),
        Naive(three_betas),
        MinIndexMembership(0.5, betas=three_betas),
        MinIndexMembership(0.5, centers=(np.array([[0.0, 0.0]]), np.array([[1.0, 1.0], [2.0, 0.0]]))),
        SyntheticInterventions(data, RewardWeights.ones(1), p=2),
    ]


def test_policies_survive_json(three_betas, rng):
    points = 2.0 * rng.standard_normal((100, 2))
    for policy in _policies(three_betas):
        text = json.dumps(policy_to_dict(policy))
        back = policy_from_dict(json.loads(text))
        assert back.name == policy.name
        assert [back.assign(y) for y in points] == [policy.assign(y) for y in points]


def test_unknown_variant_is_rejected():
    with pytest.raises(ValidationError):
        policy_from_dict({"variant": "oracle"})
    with pytest.raises(ValidationError):
        policy_from_dict({"variant": "shifted-two", "beta0": [0.0]})


def test_betaset_json(three_betas):
    data = betaset_to_dict(three_betas)
    assert data["k"] == 3 and data["T0"] == 2
    assert betaset_from_dict(data).preference_ranks == (0, 0, 1)
    with pytest.raises(ValidationError):
        betaset_from_dict({**data, "k": 4})


def _inside(halfspaces, y):
    for h in halfspaces:
        value = float(np.dot(h["a"], y))
        if not (value > h["b"] if h["strict"] else value >= h["b"]):
            return False
    return True


def test_polyhedral_policies_export_their_regions(three_betas, rng):
    points = 2.0 * rng.standard_normal((200, 2))
    for policy in _policies(three_betas)[:3]:
        regions = json.loads(json.dumps(policy_to_dict(policy)))["regions"]
        assert len(regions) == policy.k
        for y in points:
            assert _inside(regions[policy.assign(y)], y) == policy.region(policy.assign(y)).contains(y)
    two = json.loads(json.dumps(policy_to_dict(_policies(three_betas)[0])))["regions"]
    assert two[1] == [{"a": [2.0, 0.5], "b": pytest.approx(0.3 * np.hypot(2.0, 0.5)), "strict": True}]


def test_separation_report_json_has_verdict():
    report = separation_of_types([(np.zeros(2), 0), (np.zeros(2), 1)], 1.0)
    data = json.loads(json.dumps(separation_report_to_dict(report)))
    assert data["verdict"] == "VIOLATED"
    assert data["units"][0]["margin"] is None
    assert data["units"][1]["certificate"] == "grid"


def test_metrics_json_drops_records_by_default():
    cfg = ExperimentConfig(spec=SpecParams(2, 4, 6, 2, 0.0), m_train=40, m_test=5, seed=0)
    metrics = run_experiment(cfg)
    data = metrics_to_dict(metrics)
    assert "records" not in data
    assert data["n_units"] == 5
    full = metrics_to_dict(metrics, include_records=True)
    assert len(full["records"]) == 5
    json.dumps(full)
