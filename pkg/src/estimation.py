from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config_schema import PCRConfig
from .errors import DimensionMismatchError, EmptyArmError, ValidationError
from .panel_model import PanelDataset
from .policies import ShiftedMulti, ShiftedTwo
from .rewards import BetaSet, RewardWeights


logger = logging.getLogger(__name__)

REGRET_TOL = 1e-9
# Arms more than this many times larger than the smallest trigger a balance warning.
IMBALANCE_WARN_RATIO = 2.0


def _singular_values(Y: np.ndarray) -> np.ndarray:
    if Y.size == 0:
        return np.zeros(0)
    return np.linalg.svd(Y, compute_uv=False)


def select_rank_by_gap(singular_values: Sequence[float], min_singular_ratio: float = 1e-10) -> int:
    """Rank at the largest gap of the log spectrum."""

    sv = np.asarray(singular_values, dtype=float)
    if sv.size == 0 or sv[0] == 0.0:
        return 1
    if sv.size == 1:
        return 1
    floor = max(np.finfo(float).eps, min_singular_ratio) * sv[0]
    logs = np.log(np.maximum(sv, floor))
    gaps = logs[:-1] - logs[1:]
    p = int(np.argmax(gaps)) + 1
    logger.info("Selected PCR rank %d by spectral gap (log gap %.3g)", p, float(gaps[p - 1]))
    return p


def pcr_fit(Y: np.ndarray, r: Sequence[float], config: PCRConfig = PCRConfig()) -> np.ndarray:
    """Principal component regression with a ridge filter s / (s^2 + rho).

    Singular values below `min_singular_ratio * s_1` are dropped even inside the top p.
    """

    Y = np.asarray(Y, dtype=float)
    r = np.asarray(r, dtype=float).reshape(-1)
    if Y.ndim != 2:
        raise DimensionMismatchError(f"Y must be a matrix, got shape {Y.shape}")
    n, T0 = Y.shape
    if n == 0:
        raise EmptyArmError("Cannot fit PCR on an empty arm")
    if r.shape[0] != n:
        raise DimensionMismatchError(f"r has length {r.shape[0]}, Y has {n} rows")

    U, sv, Vt = np.linalg.svd(Y, full_matrices=False)
    p = config.p if config.p is not None else select_rank_by_gap(sv, config.min_singular_ratio)
    if p > min(n, T0):
        raise ValidationError(f"PCR rank p={p} exceeds min(n_d, T0) = {min(n, T0)}")
    if sv[0] == 0.0:
        return np.zeros(T0)

    keep = np.arange(p)
    keep = keep[sv[keep] > config.min_singular_ratio * sv[0]]
    s = sv[keep]
    filt = s / (s**2 + config.rho)
    return Vt[keep].T @ (filt * (U[:, keep].T @ r))


def snr(Y: np.ndarray, min_singular_ratio: float = 1e-10) -> float:
    """Smallest retained singular value over sqrt(rows) + sqrt(cols)."""

    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.size == 0:
        raise ValidationError("snr needs a nonempty matrix")
    sv = _singular_values(Y)
    if sv[0] == 0.0:
        return 0.0
    retained = sv[sv > min_singular_ratio * sv[0]]
    return float(retained[-1] / (np.sqrt(Y.shape[0]) + np.sqrt(Y.shape[1])))


def rowspan_projection(Y: np.ndarray, beta: Sequence[float], min_singular_ratio: float = 1e-10) -> np.ndarray:
    """Orthogonal projection of beta onto the row space of Y."""

    Y = np.asarray(Y, dtype=float)
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if Y.ndim != 2 or Y.shape[1] != beta.shape[0]:
        raise DimensionMismatchError(f"beta has length {beta.shape[0]}, Y is {Y.shape}")
    _, sv, Vt = np.linalg.svd(Y, full_matrices=False)
    if sv.size == 0 or sv[0] == 0.0:
        return np.zeros_like(beta)
    V = Vt[sv > min_singular_ratio * sv[0]]
    return V.T @ (V @ beta)


@dataclass(frozen=True, eq=False)
class LearnedBetas:
    beta_hats: BetaSet
    singular_values: Tuple[np.ndarray, ...]
    snr: Tuple[float, ...]
    n: Tuple[int, ...]
    ranks: Tuple[int, ...]
    well_balancing: Dict[str, object] = field(default_factory=dict)


def arm_rewards(data: PanelDataset, omega: RewardWeights) -> np.ndarray:
    if data.T - data.T0 != len(omega):
        raise DimensionMismatchError(f"omega has length {len(omega)}, post-period has {data.T - data.T0} steps")
    return data.y_post @ omega.omega


def learn_betas(
    data: PanelDataset,
    omega: RewardWeights,
    config: PCRConfig = PCRConfig(),
    preference_ranks: Optional[Sequence[int]] = None,
    latent_dim: Optional[int] = None,
) -> LearnedBetas:
    """Per-arm PCR of observed rewards on pre-period outcomes.

    Well-balancing diagnostics run first and are kept on the result; `latent_dim`
    enables the k > s warning.
    """

    rewards = arm_rewards(data, omega)
    balance = well_balancing_diagnostics(data, latent_dim, config.min_singular_ratio)
    betas, svs, snrs, sizes, ranks = [], [], [], [], []
    for d, idx in enumerate(data.indices):
        if idx.size == 0:
            raise EmptyArmError(f"Arm {d} has no units")
        Y = data.y_pre[idx]
        sv = _singular_values(Y)
        p = config.p if config.p is not None else select_rank_by_gap(sv, config.min_singular_ratio)
        betas.append(pcr_fit(Y, rewards[idx], PCRConfig(p=p, rho=config.rho, min_singular_ratio=config.min_singular_ratio)))
        svs.append(sv)
        snrs.append(snr(Y, config.min_singular_ratio))
        sizes.append(int(idx.size))
        ranks.append(p)
    return LearnedBetas(
        beta_hats=BetaSet(np.vstack(betas), None if preference_ranks is None else tuple(preference_ranks)),
        singular_values=tuple(svs),
        snr=tuple(snrs),
        n=tuple(sizes),
        ranks=tuple(ranks),
        well_balancing=balance,
    )


def learn_two(
    data: PanelDataset,
    omega: RewardWeights,
    delta: float,
    config: PCRConfig = PCRConfig(),
    latent_dim: Optional[int] = None,
) -> Tuple[ShiftedTwo, LearnedBetas]:
    if data.k != 2:
        raise ValidationError(f"learn_two needs k = 2, got {data.k}")
    learned = learn_betas(data, omega, config, latent_dim=latent_dim)
    policy = ShiftedTwo(learned.beta_hats[0], learned.beta_hats[1], delta)
    return policy, learned


def learn_multi(
    data: PanelDataset,
    omega: RewardWeights,
    delta: float,
    config: PCRConfig = PCRConfig(),
    preference_ranks: Optional[Sequence[int]] = None,
    latent_dim: Optional[int] = None,
) -> Tuple[ShiftedMulti, LearnedBetas]:
    if data.k < 2:
        raise ValidationError(f"learn_multi needs k >= 2, got {data.k}")
    learned = learn_betas(data, omega, config, preference_ranks, latent_dim)
    return ShiftedMulti(learned.beta_hats, delta), learned


@dataclass(frozen=True, eq=False)
class GapSpec:
    """gamma[d, d2] is the reward margin type-d units need over intervention d2."""

    gamma: np.ndarray
    delta: float
    sigma: float
    beta_bar: float
    T0: int
    alpha: float
    error_norms: np.ndarray

    def satisfied_by(self, betas: BetaSet, y_expected: Sequence[float], d: int) -> bool:
        """Whether a type-d unit at y_expected clears every margin against less-preferred interventions."""
        y = np.asarray(y_expected, dtype=float).reshape(-1)
        ranks = betas.preference_ranks
        for other in range(betas.k):
            if ranks[other] < ranks[d] and float(np.dot(betas[d] - betas[other], y)) <= self.gamma[d, other]:
                return False
        return True


def gap_threshold(
    beta_true: Optional[BetaSet],
    beta_hat: BetaSet,
    delta: float,
    sigma: float,
    beta_bar: float,
    alpha: float,
    error_bounds: Optional[Sequence[float]] = None,
) -> GapSpec:
    """Reward margins under which truthful reporting is already optimal.

    Without beta_true, `error_bounds` stand in for |beta - beta_hat| per arm and the
    pairwise distance is bounded through the estimates.
    """

    if not (0.0 < alpha < 1.0):
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha}")
    if delta < 0 or sigma < 0:
        raise ValidationError("delta and sigma must be >= 0")
    k, T0 = beta_hat.k, beta_hat.T0

    if beta_true is not None:
        if beta_true.betas.shape != beta_hat.betas.shape:
            raise DimensionMismatchError(f"beta_true {beta_true.betas.shape} vs beta_hat {beta_hat.betas.shape}")
        worst = float(np.max(np.abs(beta_true.betas)))
        if beta_bar < worst:
            raise ValidationError(f"beta_bar={beta_bar} is below max |beta| = {worst}")
        errors = np.linalg.norm(beta_true.betas - beta_hat.betas, axis=1)
        reference = beta_true.betas
    else:
        if error_bounds is None:
            raise ValidationError("gap_threshold needs beta_true or error_bounds")
        errors = np.asarray(error_bounds, dtype=float).reshape(-1)
        if errors.shape[0] != k or np.any(errors < 0):
            raise ValidationError(f"error_bounds must be {k} non-negative numbers")
        reference = None

    noise_term = 6.0 * sigma * beta_bar * np.sqrt(2.0 * T0 * np.log(1.0 / alpha))
    gamma = np.zeros((k, k))
    for d in range(k):
        for other in range(k):
            if d == other:
                continue
            if reference is not None:
                distance = float(np.linalg.norm(reference[d] - reference[other]))
            else:
                distance = float(np.linalg.norm(beta_hat[d] - beta_hat[other])) + errors[d] + errors[other]
            gamma[d, other] = (np.sqrt(T0) + delta) * (errors[d] + errors[other]) + delta * distance + noise_term
    return GapSpec(
        gamma=gamma, delta=delta, sigma=sigma, beta_bar=beta_bar, T0=T0, alpha=alpha, error_norms=errors
    )


@dataclass(frozen=True)
class RegretCheck:
    regret: float
    bound: float
    holds: bool


def regret_decomposition(
    assigned: int, optimal: int, estimated_rewards: Sequence[float], expected_rewards: Sequence[float]
) -> RegretCheck:
    r_hat = np.asarray(estimated_rewards, dtype=float).reshape(-1)
    r = np.asarray(expected_rewards, dtype=float).reshape(-1)
    if r_hat.shape != r.shape:
        raise DimensionMismatchError(f"estimated rewards {r_hat.shape} vs expected rewards {r.shape}")
    regret = float(r[optimal] - r[assigned])
    bound = float(np.sum(np.abs(r_hat - r)))
    return RegretCheck(regret=regret, bound=bound, holds=regret <= bound + REGRET_TOL)


def well_balancing_diagnostics(data: PanelDataset, s: Optional[int] = None, min_singular_ratio: float = 1e-10) -> Dict[str, object]:
    """Arm sizes, per-arm snr and warnings about unbalanced designs."""

    sizes = [int(idx.size) for idx in data.indices]
    warnings: List[str] = []
    if min(sizes) == 0:
        warnings.append(f"empty arm(s): {[d for d, n in enumerate(sizes) if n == 0]}")
        ratio = float("inf")
    else:
        ratio = max(sizes) / min(sizes)
        if ratio > IMBALANCE_WARN_RATIO:
            warnings.append(f"arm sizes are unbalanced (max/min = {ratio:.2f})")
    snrs = [snr(data.y_pre[idx], min_singular_ratio) if idx.size else 0.0 for idx in data.indices]
    if s is not None and data.k > s:
        warnings.append(f"k={data.k} exceeds the latent dimension s={s}")
    for w in warnings:
        logger.warning("Well-balancing: %s", w)
    return {"arm_sizes": sizes, "size_ratio": ratio, "snr": snrs, "warnings": warnings}
