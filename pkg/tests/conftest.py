from __future__ import annotations

import numpy as np
import pytest

from src.panel_model import LatentFactorSpec, random_latent_spec, sample_unit_factors
from src.rewards import BetaSet, RewardWeights, betas_from_spec


THREE_BETAS = np.array([[-1.0, 0.5], [1.0, 0.5], [0.0, 1.0]])


@pytest.fixture
def three_spec() -> LatentFactorSpec:
    """Identity control factors; two equal post-period factors per arm that sum to THREE_BETAS."""
    U = np.zeros((3, 4, 2))
    U[:, :2, :] = np.eye(2)
    U[:, 2:, :] = 0.5 * THREE_BETAS[:, None, :]
    return LatentFactorSpec(U=U, T0=2)


@pytest.fixture
def three_betas(three_spec) -> BetaSet:
    """Two indifferent interventions below a preferred third."""
    return betas_from_spec(three_spec, RewardWeights.ones(2), (0, 0, 1))


@pytest.fixture
def axis_betas() -> BetaSet:
    """k=2 with normal beta1 - beta0 = [2, 0]."""
    return BetaSet(np.array([[0.0, 0.0], [2.0, 0.0]]))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def world(rng):
    """Noiseless random k=2 world with betas and 50 units' expected pre-outcomes."""
    spec = random_latent_spec(s=3, T0=6, T=8, k=2, sigma=0.0, rng=rng)
    omega = RewardWeights.ones(2)
    betas = betas_from_spec(spec, omega)
    V = sample_unit_factors(50, 3, rng)
    Y = V.V @ spec.U_pre.T
    return spec, omega, betas, V, Y
