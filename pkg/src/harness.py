from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .config_schema import ExperimentConfig, PCRConfig
from .errors import InvariantViolation, ValidationError, ZeroDenominatorError
from .estimation import (
    LearnedBetas,
    learn_betas,
    learn_multi,
    learn_two,
    regret_decomposition,
    rowspan_projection,
    well_balancing_diagnostics,
)
from .panel_io import ingest_csv
from .panel_model import (
    CounterfactualPanel,
    LatentFactorSpec,
    PanelDataset,
    UnitFactors,
    generate_counterfactuals,
    observe,
    random_latent_spec,
    rct_assign,
    sample_unit_factors,
)
from .policies import MinIndexMembership, Naive, ShiftedTwo, SyntheticInterventions, best_response
from .rewards import BetaSet, RewardWeights, argmax_preferred, betas_from_spec, expected_rewards
from .semi_synthetic import sample_semi_synthetic_units, semi_synthetic_spec


logger = logging.getLogger(__name__)

# Units with a smaller expected reward gap count as boundary units.
BOUNDARY_GAP = 1e-6
# Distance to the learned boundary below which equality checks skip a unit.
BOUNDARY_DISTANCE = 1e-9
SWEEP_COLUMNS = ["ratio", "mean_ndr", "std_ndr", "mean_regret", "misassignment"]

__all__ = [
    "Metrics",
    "UnitRecord",
    "build_policy",
    "consistency_sweep",
    "delta_sweep",
    "ingest_csv",
    "normalized_delta_revenue",
    "pcr_config_for",
    "run_experiment",
    "simulate",
]


@dataclass(frozen=True)
class UnitRecord:
    unit: int
    type: int
    truthful: int
    achieved: int
    moved: bool
    effort: float
    regret: float
    bound: float
    boundary: bool


@dataclass(frozen=True)
class Metrics:
    seed: int
    delta_hat: float
    n_units: int
    normalized_delta_revenue: Optional[float]
    mean_squared_regret: Optional[float]
    mean_regret: Optional[float]
    misassignment_rate: Optional[float]
    bound_pass_rate: Optional[float]
    equivalence_holds: Optional[bool]
    records: Tuple[UnitRecord, ...] = ()


def normalized_delta_revenue(
    assigned: Sequence[int],
    reward_assigned: Sequence[float],
    reward_other: Sequence[float],
    optimal: Sequence[int],
) -> float:
    """Realized improvement over the other arm, normalized by the best achievable one.

    `reward_assigned[i]` is unit i's reward under `assigned[i]`, `reward_other[i]`
    its reward under the remaining intervention.
    """

    a = np.asarray(assigned, dtype=np.int64)
    opt = np.asarray(optimal, dtype=np.int64)
    r_assigned = np.asarray(reward_assigned, dtype=float)
    r_other = np.asarray(reward_other, dtype=float)
    if not (a.shape == opt.shape == r_assigned.shape == r_other.shape):
        raise ValidationError("normalized_delta_revenue inputs must have equal length")
    if np.any((a < 0) | (a > 1)) or np.any((opt < 0) | (opt > 1)):
        raise ValidationError("normalized_delta_revenue is defined for two interventions")
    gain = r_assigned - r_other
    numerator = float(np.sum(gain))
    denominator = float(np.sum(np.where(opt == a, gain, -gain)))
    if denominator == 0.0:
        raise ZeroDenominatorError("Every unit is indifferent between the interventions; normalized delta revenue is undefined")
    return numerator / denominator


def _seeds(seed: int) -> Tuple[int, int, int]:
    world, train, test = np.random.SeedSequence(seed).generate_state(3)
    return int(world), int(train), int(test)


def _world(cfg: ExperimentConfig, rng: np.random.Generator) -> Tuple[LatentFactorSpec, UnitFactors, Optional[np.ndarray], UnitFactors, Optional[np.ndarray]]:
    if cfg.units == "semi-synthetic":
        spec = semi_synthetic_spec(cfg.spec.sigma)
        train = sample_semi_synthetic_units(cfg.m_train, rng)
        test = sample_semi_synthetic_units(cfg.m_test, rng)
        return spec, train.V, train.noise_scale, test.V, test.noise_scale
    p = cfg.spec
    spec = random_latent_spec(p.s, p.T0, p.T, p.k, p.sigma, rng)
    return spec, sample_unit_factors(cfg.m_train, p.s, rng), None, sample_unit_factors(cfg.m_test, p.s, rng), None


def pcr_config_for(cfg: ExperimentConfig, data: PanelDataset) -> PCRConfig:
    """PCR settings with the rank defaulted to s and capped by T0 and the smallest arm."""

    pcr = cfg.pcr if cfg.pcr.p is not None else replace(cfg.pcr, p=cfg.spec.s)
    return replace(pcr, p=max(1, min(pcr.p, cfg.spec.T0, *(int(idx.size) for idx in data.indices))))


def build_policy(
    cfg: ExperimentConfig, data: PanelDataset, omega: RewardWeights
) -> Tuple[object, BetaSet, Optional[LearnedBetas]]:
    """Learn the configured policy from RCT data; returns (policy, beta_hats, learned).

    `learned` is None for synthetic interventions, which fit no per-arm betas.
    """

    delta_hat = cfg.effective_delta_hat
    pcr = pcr_config_for(cfg, data)
    s = cfg.spec.s

    if cfg.policy == "si":
        well_balancing_diagnostics(data, s, pcr.min_singular_ratio)
        policy = SyntheticInterventions(data, omega, pcr.p)
        return policy, policy.betas, None
    if delta_hat == 0.0 or cfg.policy == "naive":
        learned = learn_betas(data, omega, pcr, latent_dim=s)
        return Naive(learned.beta_hats), learned.beta_hats, learned
    if cfg.policy == "shifted-two":
        policy, learned = learn_two(data, omega, delta_hat, pcr, latent_dim=s)
        return policy, learned.beta_hats, learned
    if cfg.policy == "shifted-multi":
        policy, learned = learn_multi(data, omega, delta_hat, pcr, latent_dim=s)
        return policy, learned.beta_hats, learned
    learned = learn_betas(data, omega, pcr, latent_dim=s)
    return MinIndexMembership(delta_hat, betas=learned.beta_hats), learned.beta_hats, learned


@dataclass(frozen=True, eq=False)
class SimulatedPanels:
    spec: LatentFactorSpec
    omega: RewardWeights
    data: PanelDataset
    test: Optional[CounterfactualPanel]
    seed: int


def simulate(cfg: ExperimentConfig, seed: Optional[int] = None) -> SimulatedPanels:
    """Observed RCT training panel plus the full counterfactual test panel."""

    seed = seed if seed is not None else (cfg.seed or 0)
    world_seed, train_seed, test_seed = _seeds(seed)
    rng = np.random.default_rng(world_seed)
    spec, V_train, scale_train, V_test, scale_test = _world(cfg, rng)
    omega = RewardWeights(np.asarray(cfg.effective_omega))

    train = generate_counterfactuals(spec, V_train, train_seed, scale_train, cfg.bound_check)
    data = observe(train, rct_assign(cfg.m_train, spec.k, train_seed))
    test = None
    if cfg.m_test > 0:
        test = generate_counterfactuals(spec, V_test, test_seed, scale_test, cfg.bound_check)
    return SimulatedPanels(spec=spec, omega=omega, data=data, test=test, seed=seed)


def run_experiment(cfg: ExperimentConfig, seed: Optional[int] = None) -> Metrics:
    """RCT training panel, learned policy, strategic test units, ground-truth evaluation."""

    world = simulate(cfg, seed)
    seed, spec, omega, test = world.seed, world.spec, world.omega, world.test
    delta_hat = cfg.effective_delta_hat
    policy, beta_hats, _ = build_policy(cfg, world.data, omega)
    logger.info("Seed %d: learned %s policy (delta_hat=%.4g)", seed, policy.name, delta_hat)

    if test is None:
        return Metrics(seed, delta_hat, 0, None, None, None, None, None, None)

    true_rewards = expected_rewards(test, omega)
    ranks = beta_hats.preference_ranks
    y_obs = test.noisy[:, 0, : spec.T0]

    well_specified = isinstance(policy, ShiftedTwo) and delta_hat == cfg.delta_true
    naive_hat = Naive(beta_hats)
    normal_hat = beta_hats[1] - beta_hats[0] if spec.k == 2 else None

    records: List[UnitRecord] = []
    equivalence = True
    for i in range(test.m):
        y = y_obs[i]
        rewards = true_rewards[i]
        d_star = argmax_preferred(rewards, ranks)
        ordered = np.sort(rewards)
        boundary = spec.k > 1 and (ordered[-1] - ordered[-2]) <= BOUNDARY_GAP

        truthful = policy.assign(y)
        outcome = best_response(policy, y, cfg.delta_true)
        achieved = outcome.achieved_intervention
        check = regret_decomposition(achieved, d_star, beta_hats.betas @ y, rewards)

        if normal_hat is not None and np.any(normal_hat):
            on_learned_boundary = abs(float(np.dot(normal_hat, y))) / float(np.linalg.norm(normal_hat)) <= BOUNDARY_DISTANCE
            if not on_learned_boundary and achieved != naive_hat.assign(y):
                equivalence = False
                if well_specified:
                    raise InvariantViolation(
                        f"unit {i}: strategic assignment {achieved} differs from the naive assignment {naive_hat.assign(y)}"
                    )
            if well_specified and not on_learned_boundary and not check.holds:
                raise InvariantViolation(f"unit {i}: regret {check.regret:.6g} exceeds bound {check.bound:.6g}")

        records.append(
            UnitRecord(
                unit=i,
                type=d_star,
                truthful=truthful,
                achieved=achieved,
                moved=outcome.moved,
                effort=outcome.effort,
                regret=check.regret,
                bound=check.bound,
                boundary=bool(boundary),
            )
        )

    achieved = np.array([r.achieved for r in records])
    types = np.array([r.type for r in records])
    regrets = np.array([r.regret for r in records])
    interior = ~np.array([r.boundary for r in records])

    ndr = None
    if spec.k == 2:
        try:
            rows = np.arange(test.m)
            ndr = normalized_delta_revenue(
                achieved,
                reward_assigned=true_rewards[rows, achieved],
                reward_other=true_rewards[rows, 1 - achieved],
                optimal=types,
            )
        except ZeroDenominatorError:
            logger.warning("Seed %d: all test units indifferent; normalized delta revenue undefined", seed)

    misassignment = float(np.mean(achieved[interior] != types[interior])) if interior.any() else 0.0
    return Metrics(
        seed=seed,
        delta_hat=delta_hat,
        n_units=test.m,
        normalized_delta_revenue=ndr,
        mean_squared_regret=float(np.mean(regrets**2)),
        mean_regret=float(np.mean(regrets)),
        misassignment_rate=misassignment,
        bound_pass_rate=float(np.mean([r.regret <= r.bound + 1e-9 for r in records])),
        equivalence_holds=equivalence if normal_hat is not None else None,
        records=tuple(records),
    )


def _sweep_task(args: Tuple[ExperimentConfig, int, float]) -> Tuple[int, float, Metrics]:
    cfg, seed, ratio = args
    metrics = run_experiment(replace(cfg, delta_hat=ratio * cfg.delta_true), seed=seed)
    return seed, ratio, replace(metrics, records=())


def _map(fn, tasks: list, jobs: Optional[int]) -> list:
    workers = jobs if jobs is not None else (os.cpu_count() or 1)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, tasks))


def delta_sweep(
    cfg: ExperimentConfig,
    ratios: Sequence[float],
    jobs: Optional[int] = None,
    seeds: Optional[Sequence[int]] = None,
) -> pd.DataFrame:
    """Metrics per delta_hat / delta_true ratio, averaged over seeds."""

    if any(r < 0 for r in ratios):
        raise ValidationError(f"ratios must be >= 0, got {list(ratios)}")
    base = cfg.seed or 0
    seeds = list(seeds) if seeds is not None else [base + j for j in range(cfg.n_seeds)]
    tasks = [(cfg, s, float(r)) for s in seeds for r in ratios]
    results = sorted(_map(_sweep_task, tasks, jobs), key=lambda x: (x[0], x[1]))

    rows = []
    for ratio in ratios:
        runs = [m for s, r, m in results if r == float(ratio)]
        ndrs = np.array([m.normalized_delta_revenue for m in runs if m.normalized_delta_revenue is not None])
        regrets = np.array([m.mean_regret for m in runs if m.mean_regret is not None])
        mis = np.array([m.misassignment_rate for m in runs if m.misassignment_rate is not None])
        rows.append(
            {
                "ratio": float(ratio),
                "mean_ndr": float(ndrs.mean()) if ndrs.size else np.nan,
                "std_ndr": float(ndrs.std(ddof=1)) if ndrs.size > 1 else 0.0,
                "mean_regret": float(regrets.mean()) if regrets.size else np.nan,
                "misassignment": float(mis.mean()) if mis.size else np.nan,
            }
        )
    return pd.DataFrame(rows, columns=SWEEP_COLUMNS)


def _consistency_task(args: Tuple[int, Tuple[int, ...], float, int, int, int, int]) -> List[Tuple[int, float]]:
    seed, n_values, sigma, s, T0, T, k = args
    rng = np.random.default_rng(seed)
    spec = random_latent_spec(s, T0, T, k, sigma, rng)
    omega = RewardWeights.ones(T - T0)
    betas = betas_from_spec(spec, omega)
    V_all = sample_unit_factors(max(n_values), s, rng)
    out = []
    for n in n_values:
        panel = generate_counterfactuals(spec, UnitFactors(V_all.V[:n]), seed, bound_check="off")
        data = observe(panel, rct_assign(n, k, seed))
        learned = learn_betas(data, omega, PCRConfig(p=s))
        errors = []
        for d, idx in enumerate(data.indices):
            projected = rowspan_projection(panel.expected[idx, 0, :T0], betas[d])
            errors.append(float(np.linalg.norm(learned.beta_hats[d] - projected)))
        out.append((n, max(errors)))
    return out


def consistency_sweep(
    sigma: float,
    n_values: Sequence[int],
    seeds: Sequence[int],
    s: int = 2,
    T0: int = 6,
    T: int = 8,
    k: int = 2,
    jobs: Optional[int] = None,
) -> pd.DataFrame:
    """Median estimation error |beta_hat - P beta| per training size, P the rowspan projector."""

    if min(n_values) < max(k, s):
        raise ValidationError("every n must be >= max(k, s)")
    tasks = [(int(seed), tuple(int(n) for n in n_values), sigma, s, T0, T, k) for seed in seeds]
    per_seed = _map(_consistency_task, tasks, jobs)
    errors = {n: [] for n in n_values}
    for runs in per_seed:
        for n, err in runs:
            errors[n].append(err)
    return pd.DataFrame(
        {"n": list(n_values), "median_error": [float(np.median(errors[n])) for n in n_values]},
        columns=["n", "median_error"],
    )
