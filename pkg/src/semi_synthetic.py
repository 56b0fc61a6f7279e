"""Retail-shaped stand-in world: short weekly panels, one discount treatment.

Pre-period factors are orthonormal level / trend / curvature shapes; the discount
adds a fixed lift in factor space for the three post weeks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .panel_model import LatentFactorSpec, UnitFactors


T0 = 5
T = 8
K = 2
S = 3
DELTA_TRUE = 0.2

_WEEKS = np.arange(T0) - (T0 - 1) / 2.0
LEVEL = np.ones(T0) / np.sqrt(T0)
TREND = _WEEKS / np.linalg.norm(_WEEKS)
_CURV = np.array([2.0, -1.0, -2.0, -1.0, 2.0])
CURVATURE = _CURV / np.linalg.norm(_CURV)

CONTROL_POST = np.array([1.0 / np.sqrt(T0), 0.1, 0.0])
DISCOUNT_LIFT = np.array([-0.1, 0.8, 0.4])

LEVEL_RANGE = (0.3, 0.7)
TREND_SD, TREND_CLIP = 0.25, 0.45
CURVATURE_SD, CURVATURE_CLIP = 0.25, 0.35
NOISE_MULTIPLIER_RANGE = (0.5, 1.5)


@dataclass(frozen=True, eq=False)
class SemiSyntheticUnits:
    V: UnitFactors
    noise_scale: np.ndarray

    @property
    def margins(self) -> np.ndarray:
        """Expected discount minus control reward per unit (omega = 1)."""
        return self.V.V @ DISCOUNT_LIFT


def semi_synthetic_spec(sigma: float) -> LatentFactorSpec:
    U = np.zeros((K, T, S))
    U[:, :T0, :] = np.stack([LEVEL, TREND, CURVATURE], axis=1)
    U[0, T0:, :] = CONTROL_POST
    U[1, T0:, :] = CONTROL_POST + DISCOUNT_LIFT / (T - T0)
    return LatentFactorSpec(U=U, T0=T0, sigma=sigma)


def sample_semi_synthetic_units(m: int, rng: np.random.Generator) -> SemiSyntheticUnits:
    level = rng.uniform(*LEVEL_RANGE, size=m)
    trend = np.clip(rng.normal(0.0, TREND_SD, size=m), -TREND_CLIP, TREND_CLIP)
    curvature = np.clip(rng.normal(0.0, CURVATURE_SD, size=m), -CURVATURE_CLIP, CURVATURE_CLIP)
    V = np.stack([level, trend, curvature], axis=1) if m else np.zeros((0, S))
    noise_scale = rng.uniform(*NOISE_MULTIPLIER_RANGE, size=m)
    return SemiSyntheticUnits(V=UnitFactors(V), noise_scale=noise_scale)
