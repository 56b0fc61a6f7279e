from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from .config_schema import PCRConfig, SIFailureConfig
from .errors import ValidationError
from .estimation import learn_two
from .geometry import Halfspace, Region, project_onto_region, separation_of_types, type_region
from .panel_model import LatentFactorSpec, UnitFactors, generate_counterfactuals, observe, rct_assign
from .policies import ShiftedMulti, ShiftedTwo, SyntheticInterventions, best_response
from .rewards import BetaSet, RewardWeights, argmax_preferred


logger = logging.getLogger(__name__)

# Three interventions where units are indifferent between the first two.
IMPOSSIBLE_BETAS = np.array([[-1.0, 0.5], [1.0, 0.5], [0.0, 1.0]])
IMPOSSIBLE_RANKS = (0, 0, 1)
LINE_SAMPLES = 200


def impossibility_inequality(alpha: float, zeta: float, delta: float) -> Tuple[float, float]:
    """(lhs, rhs); separation of types fails on the construction when lhs <= rhs."""

    return 0.5 * zeta + alpha, delta * (np.sqrt(1.25) - 0.5)


def impossible_units(alpha: float, zeta: float, delta: float, n: int = LINE_SAMPLES) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sampled type-0 and type-1 lines and the single type-2 unit.

    Samples bunch up quadratically toward the apex where coverage is tightest.
    """

    x = 3.0 * delta * (np.arange(1, n + 1) / n) ** 2
    line0 = np.stack([-x, 2.0 * (-alpha + x)], axis=1)
    line1 = np.stack([x, 2.0 * (-alpha + x)], axis=1)
    return line0, line1, np.array([0.0, zeta])


def demo_impossible(alpha: float, zeta: float, delta: float, n: int = LINE_SAMPLES) -> Dict[str, Any]:
    if min(alpha, zeta, delta) <= 0:
        raise ValidationError("alpha, zeta and delta must be > 0")
    betas = BetaSet(IMPOSSIBLE_BETAS, IMPOSSIBLE_RANKS)
    lhs, rhs = impossibility_inequality(alpha, zeta, delta)
    line0, line1, v2 = impossible_units(alpha, zeta, delta, n)

    units = [(y, 0) for y in line0] + [(y, 1) for y in line1] + [(v2, 2)]
    finite = separation_of_types(units, delta, mode="finite", betas=betas)
    continuum = separation_of_types([(v2, 2)], delta, mode="continuum", betas=betas)
    top = finite.verdicts[-1]

    policy = ShiftedMulti(betas, delta)
    v2_outcome = best_response(policy, v2, delta)
    line_outcomes = [best_response(policy, y, delta).achieved_intervention for y in np.vstack([line0, line1])]

    near_point = line0[np.argmin(np.abs(line0[:, 0] + delta))]
    near_distance = project_onto_region(near_point, type_region(betas, 2)).distance

    report = {
        "alpha": alpha,
        "zeta": zeta,
        "delta": delta,
        "lhs": lhs,
        "rhs": rhs,
        "verdict": "VIOLATED-SoT" if lhs <= rhs else "NO-CERTIFICATE",
        "finite_sot": {
            "satisfied": finite.satisfied,
            "top_unit_certificate": top.certificate,
            "top_unit_satisfied": top.satisfied,
            "low_confidence": finite.low_confidence,
        },
        "continuum_sot": {"satisfied": continuum.satisfied, "margin": continuum.verdicts[0].margin},
        "top_unit_best_response": {
            "achieved": v2_outcome.achieved_intervention,
            "moved": v2_outcome.moved,
            "reaches_top": v2_outcome.achieved_intervention == 2,
        },
        "lines_blocked_from_top": bool(all(d != 2 for d in line_outcomes)),
        "near_point": {"point": near_point.tolist(), "distance_to_top_cone": near_distance, "within_budget": near_distance <= delta},
    }
    logger.info("Impossibility demo: lhs=%.4g rhs=%.4g -> %s", lhs, rhs, report["verdict"])
    return report


# ---------- synthetic-interventions failure ----------


def si_failure_world(cfg: SIFailureConfig) -> Tuple[LatentFactorSpec, np.ndarray]:
    """Two-period pre-window with identity factors; returns the world and the two centers."""

    midpoint = np.array([0.3, 0.3])
    half = 0.5 * cfg.separation_ratio * cfg.delta * np.array([0.0, 1.0])
    centers = np.vstack([midpoint - half, midpoint + half])
    u0 = np.array([0.6, 0.2])
    u1 = u0 + cfg.kappa * np.array([-1.0, 1.0])
    U = np.zeros((2, 3, 2))
    U[:, :2, :] = np.eye(2)
    U[0, 2] = u0
    U[1, 2] = u1
    return LatentFactorSpec(U=U, T0=2, sigma=cfg.sigma), centers


def demo_si_failure(cfg: SIFailureConfig) -> Dict[str, Any]:
    spec, centers = si_failure_world(cfg)
    omega = RewardWeights.ones(1)
    seeds = np.random.SeedSequence(cfg.seed).generate_state(2)

    train_types = np.arange(cfg.m_train) % 2
    train = generate_counterfactuals(spec, UnitFactors(centers[train_types]), int(seeds[0]))
    data = observe(train, rct_assign(cfg.m_train, 2, int(seeds[0])))

    si = SyntheticInterventions(data, omega, cfg.rank)
    shifted, _ = learn_two(data, omega, cfg.delta, PCRConfig(p=min(cfg.rank, 2)))

    test_types = np.arange(cfg.m_test) % 2
    test = generate_counterfactuals(spec, UnitFactors(centers[test_types]), int(seeds[1]))
    rewards = test.expected[:, :, 2]
    types = np.array([argmax_preferred(r, (0, 1)) for r in rewards])
    y_obs = test.noisy[:, 0, :2]

    def _misassigned(policy) -> np.ndarray:
        return np.array([best_response(policy, y, cfg.delta).achieved_intervention for y in y_obs]) != types

    si_wrong = _misassigned(si)
    shifted_wrong = _misassigned(shifted)
    type0 = types == 0
    return {
        "delta": cfg.delta,
        "separation": float(np.linalg.norm(centers[1] - centers[0])),
        "sigma": cfg.sigma,
        "m_test": cfg.m_test,
        "si_misassignment": float(si_wrong.mean()),
        "si_type0_misassignment": float(si_wrong[type0].mean()) if type0.any() else 0.0,
        "shifted_misassignment": float(shifted_wrong.mean()),
    }


# ---------- gap necessity ----------


@dataclass(frozen=True, eq=False)
class IntervalPolicy:
    """One-dimensional plug-in policy: 1 below theta1, 2 above theta2_hat, 0 in between."""

    theta1: float
    theta2_hat: float

    name = "interval"

    def __post_init__(self) -> None:
        if not self.theta1 < self.theta2_hat:
            raise ValidationError(f"Need theta1 < theta2_hat, got {self.theta1} and {self.theta2_hat}")

    @property
    def T0(self) -> int:
        return 1

    @property
    def k(self) -> int:
        return 3

    @property
    def preference_ranks(self) -> Tuple[int, ...]:
        return (0, 1, 2)

    def assign(self, y_tilde: Sequence[float]) -> int:
        y = float(np.asarray(y_tilde, dtype=float).reshape(-1)[0])
        if y >= self.theta2_hat:
            return 2
        if y <= self.theta1:
            return 1
        return 0

    def region(self, d: int) -> Region:
        if d == 2:
            return Region((Halfspace([1.0], self.theta2_hat),))
        if d == 1:
            return Region((Halfspace([-1.0], -self.theta1),))
        if d == 0:
            return Region((Halfspace([1.0], self.theta1, strict=True), Halfspace([-1.0], -self.theta2_hat, strict=True)))
        raise ValidationError(f"Intervention {d} outside 0..2")


def demo_gap_necessity(
    theta1: float, theta2: float, c: float, alpha_small: float, delta: float, n_values: Sequence[int]
) -> Dict[str, Any]:
    """Best response of a unit just out of reach of theta2, under theta2_hat = theta2 -/+ c/n."""

    if not theta1 < theta2:
        raise ValidationError(f"Need theta1 < theta2, got {theta1} >= {theta2}")
    if c <= 0 or alpha_small <= 0 or delta <= 0:
        raise ValidationError("c, alpha_small and delta must be > 0")
    if not (delta + alpha_small < theta2 - theta1 < 2 * delta + alpha_small):
        raise ValidationError("Need delta + alpha_small < theta2 - theta1 < 2*delta + alpha_small")
    y = np.array([theta2 - delta - alpha_small])

    rows: List[Dict[str, Any]] = []
    for n in n_values:
        if n < 1:
            raise ValidationError(f"n must be >= 1, got {n}")
        row: Dict[str, Any] = {"n": int(n), "predicted_flip": n < c / alpha_small}
        for label, sign in (("minus", -1.0), ("plus", 1.0)):
            outcome = best_response(IntervalPolicy(theta1, theta2 + sign * c / n), y, delta)
            row[f"target_{label}"] = outcome.achieved_intervention
            row[f"y_{label}"] = float(outcome.y_modified[0])
        row["flips"] = row["target_minus"] != row["target_plus"]
        rows.append(row)
    return {
        "theta1": theta1,
        "theta2": theta2,
        "c": c,
        "alpha_small": alpha_small,
        "delta": delta,
        "y": float(y[0]),
        "cases": rows,
        "consistent": all(r["flips"] == r["predicted_flip"] for r in rows),
    }
