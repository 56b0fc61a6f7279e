from __future__ import annotations

import logging

import numpy as np
import pytest

from src.config_schema import PCRConfig
from src.errors import DegenerateBoundaryError, EmptyArmError, ValidationError
from src.estimation import (
    gap_threshold,
    learn_betas,
    learn_multi,
    learn_two,
    pcr_fit,
    regret_decomposition,
    rowspan_projection,
    select_rank_by_gap,
    snr,
    well_balancing_diagnostics,
)
from src.panel_model import PanelDataset, generate_counterfactuals, observe, random_latent_spec, rct_assign, sample_unit_factors
from src.policies import ShiftedTwo
from src.rewards import BetaSet, RewardWeights, betas_from_spec


def _noiseless_data(rng, k=2, m=120, s=3, T0=6, T=8):
    spec = random_latent_spec(s=s, T0=T0, T=T, k=k, sigma=0.0, rng=rng)
    omega = RewardWeights.ones(T - T0)
    panel = generate_counterfactuals(spec, sample_unit_factors(m, s, rng), seed=0)
    data = observe(panel, rct_assign(m, k, seed=0))
    return spec, omega, data


def test_pcr_examples():
    assert np.allclose(pcr_fit(np.eye(3), [1.0, 2.0, 3.0], PCRConfig(p=3)), [1.0, 2.0, 3.0])
    ones = np.ones((2, 2))
    assert np.allclose(pcr_fit(ones, [2.0, 2.0], PCRConfig(p=1)), [1.0, 1.0])
    # The second singular value is numerically zero and gets dropped.
    assert np.allclose(pcr_fit(ones, [2.0, 2.0], PCRConfig(p=2)), [1.0, 1.0])


def test_pcr_recovers_rewards_in_the_column_space(rng):
    for _ in range(20):
        Y = rng.standard_normal((30, 3)) @ rng.standard_normal((3, 8))
        r = Y @ rng.standard_normal(8)
        beta = pcr_fit(Y, r, PCRConfig(p=3))
        assert np.max(np.abs(Y @ beta - r)) <= 1e-8


def test_pcr_validation():
    with pytest.raises(ValidationError):
        pcr_fit(np.eye(2), [1.0, 1.0], PCRConfig(p=3))
    with pytest.raises(EmptyArmError):
        pcr_fit(np.zeros((0, 2)), [], PCRConfig(p=1))
    assert np.array_equal(pcr_fit(np.zeros((3, 2)), [1.0, 1.0, 1.0], PCRConfig(p=1)), [0.0, 0.0])


def test_ridge_filter_shrinks_and_is_continuous(rng):
    Y = rng.standard_normal((20, 4))
    r = rng.standard_normal(20)
    plain = pcr_fit(Y, r, PCRConfig(p=4))
    tiny = pcr_fit(Y, r, PCRConfig(p=4, rho=1e-12))
    ridge = pcr_fit(Y, r, PCRConfig(p=4, rho=10.0))
    assert np.allclose(plain, tiny, atol=1e-8)
    assert np.linalg.norm(ridge) < np.linalg.norm(plain)


def test_rank_selection_by_gap():
    assert select_rank_by_gap([10.0, 9.0, 0.01]) == 2
    assert select_rank_by_gap([5.0, 0.1, 0.09, 0.08]) == 1
    assert select_rank_by_gap([3.0]) == 1


def test_snr_examples():
    assert snr(np.eye(4)) == pytest.approx(1.0 / 4.0)
    assert snr(np.ones((2, 2))) == pytest.approx(1.0 / np.sqrt(2.0))
    assert snr(3.0 * np.eye(4)) == pytest.approx(3.0 * snr(np.eye(4)))
    assert snr(np.zeros((3, 3))) == 0.0


def test_rowspan_projection_is_idempotent(rng):
    Y = rng.standard_normal((10, 2)) @ rng.standard_normal((2, 5))
    beta = rng.standard_normal(5)
    once = rowspan_projection(Y, beta)
    assert np.allclose(rowspan_projection(Y, once), once)
    assert np.allclose(Y @ once, Y @ beta)


def test_learn_two_matches_true_policy_without_noise(rng):
    spec, omega, data = _noiseless_data(rng)
    betas = betas_from_spec(spec, omega)
    policy, learned = learn_two(data, omega, 0.2, PCRConfig(p=3))
    assert np.allclose(learned.beta_hats.betas, betas.betas, atol=1e-8)
    truth = ShiftedTwo(betas[0], betas[1], 0.2)
    V = sample_unit_factors(1000, 3, rng)
    for y in V.V @ spec.U_pre.T:
        assert policy.assign(y) == truth.assign(y)


def test_learn_two_rejects_a_zero_normal():
    data = PanelDataset(
        y_pre=np.array([[1.0, 0.0], [1.0, 0.0]]), assigned=np.array([0, 1]), y_post=np.array([[1.0], [1.0]]), k=2
    )
    with pytest.raises(DegenerateBoundaryError):
        learn_two(data, RewardWeights.ones(1), 0.1, PCRConfig(p=1))


def test_learn_multi_recovers_betas_and_matches_learn_two(rng):
    spec, omega, data = _noiseless_data(rng, k=3, m=150)
    policy, learned = learn_multi(data, omega, 0.3, PCRConfig(p=3))
    assert np.allclose(learned.beta_hats.betas, betas_from_spec(spec, omega).betas, atol=1e-8)
    assert learned.n == tuple(int(idx.size) for idx in data.indices)

    _, omega2, data2 = _noiseless_data(rng, k=2)
    two, _ = learn_two(data2, omega2, 0.3, PCRConfig(p=3))
    multi, _ = learn_multi(data2, omega2, 0.3, PCRConfig(p=3))
    for y in rng.standard_normal((500, 6)):
        assert two.assign(y) == multi.assign(y)


def test_learn_multi_recovers_the_three_intervention_betas(three_spec, three_betas, rng):
    panel = generate_counterfactuals(three_spec, sample_unit_factors(60, 2, rng, radius=0.5), seed=0)
    data = observe(panel, rct_assign(60, 3, seed=0))
    policy, learned = learn_multi(data, RewardWeights.ones(2), 0.3, PCRConfig(p=2), (0, 0, 1))
    assert np.allclose(learned.beta_hats.betas, three_betas.betas, atol=1e-8)
    assert policy.preference_ranks == (0, 0, 1)


def test_learning_ignores_unit_order(rng):
    _, omega, data = _noiseless_data(rng)
    perm = rng.permutation(data.m)
    shuffled = PanelDataset(y_pre=data.y_pre[perm], assigned=data.assigned[perm], y_post=data.y_post[perm], k=2)
    a = learn_betas(data, omega, PCRConfig(p=3)).beta_hats.betas
    b = learn_betas(shuffled, omega, PCRConfig(p=3)).beta_hats.betas
    assert np.allclose(a, b, atol=1e-10)


def test_empty_arm_is_an_error():
    data = PanelDataset(y_pre=np.eye(2), assigned=np.array([0, 0]), y_post=np.ones((2, 1)), k=2)
    with pytest.raises(EmptyArmError):
        learn_betas(data, RewardWeights.ones(1), PCRConfig(p=1))


def test_gap_threshold_with_exact_estimates(three_betas):
    gap = gap_threshold(three_betas, three_betas, delta=1.0, sigma=0.0, beta_bar=1.0, alpha=0.05)
    assert gap.gamma[2, 0] == pytest.approx(np.sqrt(1.25))
    assert gap.gamma[0, 1] == pytest.approx(2.0)
    assert np.all(np.diag(gap.gamma) == 0.0)
    zero = gap_threshold(three_betas, three_betas, delta=0.0, sigma=0.0, beta_bar=1.0, alpha=0.05)
    assert np.all(zero.gamma == 0.0)


def test_gap_threshold_grows_with_noise_and_error(three_betas):
    base = gap_threshold(three_betas, three_betas, 0.5, 0.0, 1.0, 0.05).gamma
    noisy = gap_threshold(three_betas, three_betas, 0.5, 0.1, 1.0, 0.05).gamma
    off = gap_threshold(three_betas, three_betas.scaled(1.01), 0.5, 0.0, 1.0, 0.05).gamma
    mask = ~np.eye(3, dtype=bool)
    assert np.all(noisy[mask] > base[mask])
    assert np.all(off[mask] > base[mask])


def test_gap_threshold_from_error_bounds(three_betas):
    gap = gap_threshold(None, three_betas, 1.0, 0.0, 1.0, 0.05, error_bounds=[0.1, 0.1, 0.1])
    expected = (np.sqrt(2) + 1.0) * 0.2 + (np.sqrt(1.25) + 0.2)
    assert gap.gamma[2, 0] == pytest.approx(expected)


def test_gap_threshold_validation(three_betas):
    with pytest.raises(ValidationError):
        gap_threshold(three_betas, three_betas, 1.0, 0.0, 1.0, 1.5)
    with pytest.raises(ValidationError):
        gap_threshold(three_betas, three_betas, 1.0, 0.0, 0.5, 0.05)
    with pytest.raises(ValidationError):
        gap_threshold(None, three_betas, 1.0, 0.0, 1.0, 0.05)


def test_regret_decomposition():
    exact = regret_decomposition(2, 2, [1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert exact.regret == 0.0 and exact.bound == 0.0 and exact.holds
    off = regret_decomposition(0, 1, [1.0, 0.9], [0.8, 1.0])
    assert off.regret == pytest.approx(0.2)
    assert off.bound == pytest.approx(0.3)
    assert off.holds


def test_well_balancing_warns_on_unbalanced_arms(caplog):
    data = PanelDataset(y_pre=np.eye(5), assigned=np.array([0, 0, 0, 0, 1]), y_post=np.ones((5, 1)), k=2)
    with caplog.at_level(logging.WARNING):
        report = well_balancing_diagnostics(data, s=1)
    assert report["arm_sizes"] == [4, 1]
    assert report["size_ratio"] == 4.0
    assert any("unbalanced" in w for w in report["warnings"])
    assert any("latent dimension" in w for w in report["warnings"])
    assert "Well-balancing" in caplog.text


def test_learning_records_well_balancing(caplog):
    data = PanelDataset(y_pre=np.eye(5), assigned=np.array([0, 0, 0, 0, 1]), y_post=np.ones((5, 1)), k=2)
    with caplog.at_level(logging.WARNING):
        learned = learn_betas(data, RewardWeights.ones(1), PCRConfig(p=1), latent_dim=1)
    assert learned.well_balancing["arm_sizes"] == [4, 1]
    assert any("latent dimension" in w for w in learned.well_balancing["warnings"])
    assert "Well-balancing" in caplog.text
    assert learn_betas(data, RewardWeights.ones(1), PCRConfig(p=1)).well_balancing["warnings"] == [
        "arm sizes are unbalanced (max/min = 4.00)"
    ]
