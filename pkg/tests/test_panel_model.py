from __future__ import annotations

import logging

import numpy as np
import pytest

from src.errors import DimensionMismatchError, OutcomeBoundError, ValidationError
from src.panel_model import (
    LatentFactorSpec,
    UnitFactors,
    generate_counterfactuals,
    observe,
    rct_assign,
    random_latent_spec,
    sample_unit_factors,
    truncated_normal,
)


def _spec(rng, sigma=0.1, k=2):
    return random_latent_spec(s=3, T0=5, T=8, k=k, sigma=sigma, rng=rng)


def test_expected_outcomes_are_inner_products(rng):
    spec = _spec(rng, sigma=0.0)
    V = sample_unit_factors(4, 3, rng)
    panel = generate_counterfactuals(spec, V, seed=1)
    for i in range(4):
        for d in range(2):
            assert np.allclose(panel.expected[i, d], spec.U[d] @ V.V[i])
    assert np.array_equal(panel.expected, panel.noisy)


def test_identity_control_factors_report_the_unit_factors(three_spec, rng):
    V = sample_unit_factors(30, 2, rng, radius=0.5)
    panel = generate_counterfactuals(three_spec, V, seed=0)
    for d in range(3):
        assert np.allclose(panel.expected[:, d, :2], V.V)
    assert np.array_equal(panel.noisy, panel.expected)


def test_expected_panel_has_rank_at_most_s(rng):
    spec = _spec(rng, sigma=0.0)
    V = sample_unit_factors(40, 3, rng)
    panel = generate_counterfactuals(spec, V, seed=0)
    flat = panel.expected.reshape(40, -1)
    assert np.linalg.matrix_rank(flat) <= 3


def test_same_seed_same_panel(rng):
    spec = _spec(rng)
    V = sample_unit_factors(10, 3, rng)
    a = generate_counterfactuals(spec, V, seed=7)
    b = generate_counterfactuals(spec, V, seed=7)
    assert np.array_equal(a.noisy, b.noisy)
    c = generate_counterfactuals(spec, V, seed=8)
    assert not np.array_equal(a.noisy, c.noisy)


def test_adding_units_keeps_existing_draws(rng):
    spec = _spec(rng)
    V = sample_unit_factors(6, 3, rng)
    small = generate_counterfactuals(spec, UnitFactors(V.V[:3]), seed=3)
    large = generate_counterfactuals(spec, V, seed=3)
    assert np.array_equal(small.noisy, large.noisy[:3])


def test_pre_period_noise_is_shared_across_arms(rng):
    spec = _spec(rng, k=3)
    V = sample_unit_factors(5, 3, rng)
    panel = generate_counterfactuals(spec, V, seed=2)
    pre = panel.noisy[:, :, : spec.T0]
    assert np.array_equal(pre[:, 0], pre[:, 1])
    assert np.array_equal(pre[:, 0], pre[:, 2])


def test_noise_is_centered_and_truncated():
    z = truncated_normal(np.random.default_rng(0), 200_000)
    assert np.max(np.abs(z)) <= 4.0
    assert abs(z.mean()) < 0.01


def test_noise_scale_zero_silences_a_unit(rng):
    spec = _spec(rng)
    V = sample_unit_factors(3, 3, rng)
    panel = generate_counterfactuals(spec, V, seed=0, noise_scale=[1.0, 0.0, 1.0])
    assert np.array_equal(panel.noisy[1], panel.expected[1])
    assert not np.array_equal(panel.noisy[0], panel.expected[0])


def test_bound_violation_names_cells():
    U = np.full((2, 3, 1), 2.0)
    spec = LatentFactorSpec(U=U, T0=1)
    with pytest.raises(OutcomeBoundError) as e:
        generate_counterfactuals(spec, UnitFactors(np.array([[1.0]])), seed=0)
    assert (0, 0, 1) in e.value.cells
    assert e.value.worst == pytest.approx(2.0)


def test_bound_violation_can_warn_or_pass(caplog):
    spec = LatentFactorSpec(U=np.full((2, 3, 1), 2.0), T0=1)
    V = UnitFactors(np.array([[1.0]]))
    with caplog.at_level(logging.WARNING):
        generate_counterfactuals(spec, V, seed=0, bound_check="warn")
    assert "exceed" in caplog.text
    generate_counterfactuals(spec, V, seed=0, bound_check="off")


def test_spec_rejects_bad_shapes():
    with pytest.raises(DimensionMismatchError):
        LatentFactorSpec(U=np.zeros((2, 3)), T0=1)
    with pytest.raises(DimensionMismatchError):
        LatentFactorSpec(U=np.zeros((2, 3, 1)), T0=3)
    with pytest.raises(ValidationError):
        LatentFactorSpec(U=np.zeros((2, 3, 1)), T0=1, sigma=-1.0)


def test_latent_dimension_must_match(rng):
    spec = _spec(rng)
    with pytest.raises(DimensionMismatchError):
        generate_counterfactuals(spec, UnitFactors(np.zeros((2, 4))), seed=0)


def test_observe_reads_control_pre_and_assigned_post(rng):
    spec = _spec(rng, k=3)
    V = sample_unit_factors(3, 3, rng)
    panel = generate_counterfactuals(spec, V, seed=0)
    data = observe(panel, [2, 0, 1])
    assert np.array_equal(data.y_pre, panel.noisy[:, 0, :5])
    assert np.array_equal(data.y_post[0], panel.noisy[0, 2, 5:])
    assert np.array_equal(data.y_post[2], panel.noisy[2, 1, 5:])
    assert [list(idx) for idx in data.indices] == [[1], [2], [0]]


def test_observe_rejects_out_of_range_assignment(rng):
    spec = _spec(rng)
    panel = generate_counterfactuals(spec, sample_unit_factors(2, 3, rng), seed=0)
    with pytest.raises(ValidationError):
        observe(panel, [0, 2])


def test_rct_assign_fills_every_arm():
    assert sorted(rct_assign(2, 2, seed=0).tolist()) == [0, 1]
    for seed in range(20):
        assert np.all(np.bincount(rct_assign(6, 3, seed), minlength=3) > 0)
    assert np.array_equal(rct_assign(50, 2, 4), rct_assign(50, 2, 4))


def test_rct_assign_needs_one_unit_per_arm():
    with pytest.raises(ValidationError):
        rct_assign(1, 2, seed=0)


def test_ball_factors_keep_outcomes_bounded(rng):
    spec = random_latent_spec(s=4, T0=6, T=9, k=3, sigma=0.0, rng=rng)
    V = sample_unit_factors(200, 4, rng)
    panel = generate_counterfactuals(spec, V, seed=0)
    assert np.max(np.abs(panel.expected)) <= 1.0
    # Pre-period factors are shared by all arms.
    assert np.array_equal(spec.U[1, :6], spec.U[0, :6])
