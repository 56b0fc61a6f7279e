from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionMismatchError, RankDeficiencyError, ValidationError
from .panel_model import CounterfactualPanel, LatentFactorSpec


FULL_RANK_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class RewardWeights:
    omega: np.ndarray

    def __post_init__(self) -> None:
        omega = np.asarray(self.omega, dtype=float).reshape(-1)
        if omega.size == 0:
            raise ValidationError("omega must be non-empty")
        if not np.all(np.isfinite(omega)):
            raise ValidationError("omega entries must be finite")
        omega.setflags(write=False)
        object.__setattr__(self, "omega", omega)

    @classmethod
    def ones(cls, horizon: int) -> "RewardWeights":
        return cls(np.ones(horizon))

    def __len__(self) -> int:
        return self.omega.shape[0]


@dataclass(frozen=True, eq=False)
class BetaSet:
    """Per-intervention reward vectors in pre-outcome space.

    `preference_ranks[d]` is the unit preference of intervention d; a higher rank is
    preferred and equal ranks mean indifference. The default is the identity order.
    """

    betas: np.ndarray
    preference_ranks: Optional[Tuple[int, ...]] = None

    def __post_init__(self) -> None:
        betas = np.asarray(self.betas, dtype=float)
        if betas.ndim != 2:
            raise DimensionMismatchError(f"betas must have shape (k, T0), got {betas.shape}")
        if betas.shape[0] < 2:
            raise ValidationError(f"A BetaSet needs k >= 2 interventions, got {betas.shape[0]}")
        if not np.all(np.isfinite(betas)):
            raise ValidationError("betas contain non-finite entries")
        ranks = self.preference_ranks
        if ranks is None:
            ranks = tuple(range(betas.shape[0]))
        ranks = tuple(int(r) for r in ranks)
        if len(ranks) != betas.shape[0]:
            raise DimensionMismatchError(f"preference_ranks has {len(ranks)} entries, expected {betas.shape[0]}")
        betas.setflags(write=False)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "preference_ranks", ranks)

    @property
    def k(self) -> int:
        return self.betas.shape[0]

    @property
    def T0(self) -> int:
        return self.betas.shape[1]

    def __getitem__(self, d: int) -> np.ndarray:
        return self.betas[d]

    def preference_key(self, d: int) -> Tuple[int, int]:
        return preference_key(self.preference_ranks, d)

    def scaled(self, c: float) -> "BetaSet":
        return BetaSet(self.betas * c, self.preference_ranks)


def preference_key(ranks: Sequence[int], d: int) -> Tuple[int, int]:
    """Total order used for tie-breaking: rank first, then the larger index."""

    return (ranks[d], d)


def most_preferred_first(ranks: Sequence[int]) -> List[int]:
    return sorted(range(len(ranks)), key=lambda d: preference_key(ranks, d), reverse=True)


def least_preferred_first(ranks: Sequence[int]) -> List[int]:
    return sorted(range(len(ranks)), key=lambda d: preference_key(ranks, d))


@dataclass(frozen=True, eq=False)
class SpanCheck:
    coefficients: np.ndarray
    residual_norm: float
    target_norm: float
    rtol: float = 1e-9

    @property
    def holds(self) -> bool:
        return self.residual_norm <= self.rtol * max(self.target_norm, np.finfo(float).tiny)


@dataclass(frozen=True, eq=False)
class UnitType:
    intervention: int
    rewards: np.ndarray


def principal_reward(y_post: Sequence[float], omega: RewardWeights) -> float:
    y = np.asarray(y_post, dtype=float).reshape(-1)
    if y.shape[0] != len(omega):
        raise DimensionMismatchError(f"y_post has length {y.shape[0]}, omega has length {len(omega)}")
    return float(np.dot(omega.omega, y))


def _require_full_column_rank(U_pre: np.ndarray) -> None:
    sv = np.linalg.svd(U_pre, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0 or sv[-1] <= FULL_RANK_RTOL * sv[0] or U_pre.shape[0] < U_pre.shape[1]:
        raise RankDeficiencyError(
            f"U_pre ({U_pre.shape[0]} x {U_pre.shape[1]}) is not full column rank; "
            "need T0 >= s and non-degenerate control factors"
        )


def reformulate_beta(
    U_pre: np.ndarray,
    U_post: np.ndarray,
    omega: RewardWeights,
    preference_ranks: Optional[Sequence[int]] = None,
) -> BetaSet:
    """beta^(d) = U (U^T U)^{-1} sum_t omega_t u_t^(d), so <beta^(d), U v> is the reward of v under d."""

    U_pre = np.asarray(U_pre, dtype=float)
    U_post = np.asarray(U_post, dtype=float)
    if U_pre.ndim != 2 or U_post.ndim != 3:
        raise DimensionMismatchError("U_pre must be (T0, s) and U_post must be (k, T - T0, s)")
    if U_post.shape[2] != U_pre.shape[1]:
        raise DimensionMismatchError(f"Latent dimensions differ: U_pre has {U_pre.shape[1]}, U_post has {U_post.shape[2]}")
    if U_post.shape[1] != len(omega):
        raise DimensionMismatchError(f"omega has length {len(omega)}, post-period has {U_post.shape[1]} steps")
    _require_full_column_rank(U_pre)

    targets = np.einsum("t,dts->ds", omega.omega, U_post)
    gram = U_pre.T @ U_pre
    coeffs = np.linalg.solve(gram, targets.T)
    betas = (U_pre @ coeffs).T
    return BetaSet(betas, None if preference_ranks is None else tuple(preference_ranks))


def betas_from_spec(
    spec: LatentFactorSpec,
    omega: RewardWeights,
    preference_ranks: Optional[Sequence[int]] = None,
) -> BetaSet:
    return reformulate_beta(spec.U_pre, spec.U_post, omega, preference_ranks)


def expected_rewards(panel: CounterfactualPanel, omega: RewardWeights) -> np.ndarray:
    """m x k matrix of ground-truth rewards E[r_i^(d)]."""

    if panel.T - panel.T0 != len(omega):
        raise DimensionMismatchError(f"omega has length {len(omega)}, post-period has {panel.T - panel.T0} steps")
    return panel.expected[:, :, panel.T0 :] @ omega.omega


def check_span_inclusion(U_pre: np.ndarray, target: Sequence[float]) -> SpanCheck:
    U_pre = np.asarray(U_pre, dtype=float)
    target = np.asarray(target, dtype=float).reshape(-1)
    if U_pre.ndim != 2 or U_pre.shape[1] != target.shape[0]:
        raise DimensionMismatchError(f"target has length {target.shape[0]}, U_pre is {U_pre.shape}")

    coefficients, *_ = np.linalg.lstsq(U_pre.T, target, rcond=None)
    residual = float(np.linalg.norm(U_pre.T @ coefficients - target))
    return SpanCheck(coefficients=coefficients, residual_norm=residual, target_norm=float(np.linalg.norm(target)))


def argmax_preferred(values: np.ndarray, ranks: Sequence[int]) -> int:
    """Argmax with exact ties broken toward the unit-preferred intervention."""

    best = float(np.max(values))
    tied = [d for d in range(len(values)) if values[d] == best]
    return max(tied, key=lambda d: preference_key(ranks, d))


def unit_type(y_pre_expected: Sequence[float], betas: BetaSet) -> UnitType:
    y = np.asarray(y_pre_expected, dtype=float).reshape(-1)
    if y.shape[0] != betas.T0:
        raise DimensionMismatchError(f"y_pre has length {y.shape[0]}, betas have T0={betas.T0}")
    rewards = betas.betas @ y
    return UnitType(intervention=argmax_preferred(rewards, betas.preference_ranks), rewards=rewards)
