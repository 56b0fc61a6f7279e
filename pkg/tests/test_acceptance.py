"""End-to-end checks of the strategyproofness, learning and experiment guarantees."""

from __future__ import annotations

import numpy as np
import pytest

from src.config_schema import ExperimentConfig, PCRConfig, SIFailureConfig, SpecParams
from src.demos import demo_gap_necessity, demo_impossible, demo_si_failure
from src.estimation import gap_threshold, pcr_fit
from src.geometry import Halfspace, Region, project_onto_region
from src.harness import consistency_sweep, delta_sweep, run_experiment
from src.panel_model import random_latent_spec, sample_unit_factors
from src.policies import ShiftedMulti, ShiftedTwo, best_response
from src.rewards import BetaSet, RewardWeights, argmax_preferred, betas_from_spec


def test_true_beta_policy_is_strategyproof_on_random_worlds():
    rng = np.random.default_rng(2024)
    checked = 0
    for _ in range(1000):
        s = int(rng.integers(1, 6))
        T0 = int(rng.integers(s, 11))
        T = T0 + int(rng.integers(1, 4))
        spec = random_latent_spec(s, T0, T, 2, 0.0, rng)
        betas = betas_from_spec(spec, RewardWeights.ones(T - T0))
        delta = float(rng.uniform(0.05, 0.5))
        policy = ShiftedTwo(betas[0], betas[1], delta)
        Y = sample_unit_factors(50, s, rng).V @ spec.U_pre.T
        for y in Y:
            rewards = betas.betas @ y
            if abs(rewards[1] - rewards[0]) <= 1e-6:
                continue
            outcome = best_response(policy, y, delta)
            assert outcome.achieved_intervention == int(rewards[1] > rewards[0])
            checked += 1
    assert checked > 40_000


def _sector(a1: float, a2: float) -> Region:
    """Cone of the directions with angle in [a1, a2]."""
    return Region(
        (
            Halfspace(np.array([-np.sin(a1), np.cos(a1)]), 0.0),
            Halfspace(np.array([np.sin(a2), -np.cos(a2)]), 0.0),
        )
    )


def _ray_oracle(z: np.ndarray, a1: float, a2: float) -> float:
    angles = np.append(np.arange(a1, a2, 1e-3), a2)
    U = np.column_stack([np.cos(angles), np.sin(angles)])
    reach = np.clip(U @ z, 0.0, None)
    return float(np.min(np.linalg.norm(z[None, :] - reach[:, None] * U, axis=1)))


def test_cone_projection_matches_a_ray_grid():
    rng = np.random.default_rng(7)
    for _ in range(100):
        a1 = rng.uniform(0.0, 2.0 * np.pi)
        a2 = a1 + rng.uniform(0.1, np.pi - 0.1)
        apex = rng.uniform(-1.0, 1.0, 2)
        y = apex + rng.uniform(-2.0, 2.0, 2)
        result = project_onto_region(y, _sector(a1, a2).translated(apex))
        assert result.feasible
        assert result.kkt_residual <= 1e-9
        assert result.distance == pytest.approx(_ray_oracle(y - apex, a1, a2), abs=2e-3)


def test_three_interventions_can_be_impossible():
    report = demo_impossible(0.01, 0.01, 1.0)
    assert report["lhs"] < report["rhs"]
    assert report["verdict"] == "VIOLATED-SoT"
    assert report["top_unit_best_response"]["reaches_top"] is False
    assert report["lines_blocked_from_top"] is True


def test_pcr_recovers_rewards_exactly_without_noise():
    rng = np.random.default_rng(11)
    for _ in range(100):
        s = int(rng.integers(1, 5))
        T0 = int(rng.integers(s, 11))
        m = int(rng.integers(2 * s + 5, 60))
        V = rng.standard_normal((m, s))
        Y = V @ rng.standard_normal((s, T0))
        r = V @ rng.standard_normal(s)
        beta = pcr_fit(Y, r, PCRConfig(p=s))
        assert np.max(np.abs(Y @ beta - r)) <= 1e-8


@pytest.mark.parametrize("sigma", [0.01, 0.1])
@pytest.mark.parametrize("n", [50, 200])
def test_regret_bound_and_equivalence_on_noisy_runs(sigma, n):
    cfg = ExperimentConfig(spec=SpecParams(3, 6, 8, 2, sigma), m_train=n, m_test=60, delta_true=0.2)
    for seed in range(25):
        metrics = run_experiment(cfg, seed=seed)
        assert metrics.bound_pass_rate == 1.0
        assert metrics.equivalence_holds is True


def test_synthetic_interventions_are_gamed_on_every_seed():
    for seed in range(10):
        report = demo_si_failure(SIFailureConfig(seed=seed))
        assert report["si_misassignment"] >= 0.25
        assert report["shifted_misassignment"] <= 0.02


def test_delta_sweep_peaks_at_the_true_budget():
    cfg = ExperimentConfig(spec=SpecParams(3, 5, 8, 2, 0.05), units="semi-synthetic", m_train=135, m_test=135, seed=0)
    table = delta_sweep(cfg, [0.0, 0.5, 1.0, 5.0], jobs=1, seeds=range(10))
    ndr = dict(zip(table["ratio"], table["mean_ndr"]))
    assert ndr[0.0] < ndr[0.5] < ndr[1.0]
    assert ndr[1.0] > ndr[5.0]
    assert ndr[1.0] >= 0.9


def test_units_clearing_the_reward_gap_report_truthfully():
    rng = np.random.default_rng(3)
    delta, T0 = 0.1, 4
    units = []
    for _ in range(4):
        betas = BetaSet(rng.uniform(-1.0, 1.0, (3, T0)))
        beta_hat = BetaSet(betas.betas + 0.01 * rng.standard_normal((3, T0)))
        gap = gap_threshold(betas, beta_hat, delta, 0.0, float(np.max(np.abs(betas.betas))), 0.05)
        policy = ShiftedMulti(beta_hat, delta)
        found = 0
        for _ in range(20_000):
            y = rng.uniform(-1.0, 1.0, T0)
            d = argmax_preferred(betas.betas @ y, betas.preference_ranks)
            margins = [(betas[d] - betas[o]) @ y - gap.gamma[d, o] for o in range(3) if o != d]
            if min(margins) <= 0:
                continue
            assert gap.satisfied_by(betas, y, d)
            units.append((policy, y, d))
            found += 1
            if found == 50:
                break
    assert len(units) == 200
    for policy, y, d in units:
        outcome = best_response(policy, y, delta)
        assert outcome.moved is False
        assert outcome.achieved_intervention == d


def test_best_response_flips_only_below_the_gap_scale():
    report = demo_gap_necessity(0.0, 1.5, 1.0, 0.01, 1.0, [10, 50, 99, 101, 200])
    assert [case["flips"] for case in report["cases"]] == [True, True, True, False, False]
    assert all(case["predicted_flip"] == case["flips"] for case in report["cases"])


def test_estimation_error_does_not_grow_with_more_units():
    table = consistency_sweep(0.1, [50, 100, 200, 400], seeds=range(20), jobs=1)
    errors = table["median_error"].to_numpy()
    assert np.all(np.diff(errors) <= 0.0)
