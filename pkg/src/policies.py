from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence, Tuple, Union, runtime_checkable

import numpy as np

from .errors import DegenerateBoundaryError, DimensionMismatchError, NonPolyhedralPolicyError, ValidationError
from .geometry import (
    Halfspace,
    Region,
    eps_strict,
    in_ball,
    in_type_ball,
    project_onto_region,
    shifted_region,
    type_region,
)
from .panel_model import PanelDataset
from .rewards import BetaSet, RewardWeights, argmax_preferred, least_preferred_first, most_preferred_first, preference_key


logger = logging.getLogger(__name__)

SEARCH_RADII = 40
SEARCH_BISECTIONS = 40
SEARCH_RANDOM_DIRECTIONS = 32


@runtime_checkable
class PolyhedralPolicy(Protocol):
    """A policy whose assignment sets are exact halfspace intersections."""

    name: str

    @property
    def preference_ranks(self) -> Tuple[int, ...]: ...

    @property
    def T0(self) -> int: ...

    def assign(self, y_tilde: Sequence[float]) -> int: ...

    def region(self, d: int) -> Region: ...


def _as_point(y: Sequence[float], T0: int) -> np.ndarray:
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != T0:
        raise DimensionMismatchError(f"Point has length {y.shape[0]}, policy expects T0={T0}")
    return y


def _check_delta(delta: float) -> float:
    delta = float(delta)
    if not (delta > 0) or not np.isfinite(delta):
        raise ValidationError(f"delta must be finite and > 0, got {delta}")
    return delta


@dataclass(frozen=True, eq=False)
class ShiftedTwo:
    """Two interventions; the treatment boundary moves delta * |n| away from control."""

    beta0: np.ndarray
    beta1: np.ndarray
    delta: float

    name = "shifted-two"

    def __post_init__(self) -> None:
        b0 = np.asarray(self.beta0, dtype=float).reshape(-1)
        b1 = np.asarray(self.beta1, dtype=float).reshape(-1)
        if b0.shape != b1.shape:
            raise DimensionMismatchError(f"beta0 has length {b0.shape[0]}, beta1 has length {b1.shape[0]}")
        object.__setattr__(self, "delta", _check_delta(self.delta))
        normal = b1 - b0
        if not np.any(normal):
            raise DegenerateBoundaryError("beta1 == beta0: the decision normal is zero")
        for arr in (b0, b1, normal):
            arr.setflags(write=False)
        object.__setattr__(self, "beta0", b0)
        object.__setattr__(self, "beta1", b1)
        object.__setattr__(self, "_normal", normal)
        object.__setattr__(self, "_shift", self.delta * float(np.linalg.norm(normal)))

    @property
    def T0(self) -> int:
        return self.beta0.shape[0]

    @property
    def k(self) -> int:
        return 2

    @property
    def preference_ranks(self) -> Tuple[int, ...]:
        return (0, 1)

    @property
    def normal(self) -> np.ndarray:
        return self._normal

    @property
    def betas(self) -> BetaSet:
        return BetaSet(np.vstack([self.beta0, self.beta1]))

    def assign(self, y_tilde: Sequence[float]) -> int:
        y = _as_point(y_tilde, self.T0)
        return 1 if float(np.dot(self._normal, y)) - self._shift > 0 else 0

    def region(self, d: int) -> Region:
        if d == 1:
            return Region((Halfspace(self._normal, self._shift, strict=True),))
        if d == 0:
            return Region((Halfspace(-self._normal, -self._shift, strict=False),))
        raise ValidationError(f"Intervention {d} outside 0..1")


@dataclass(frozen=True, eq=False)
class ShiftedMulti:
    betas: BetaSet
    delta: float

    name = "shifted-multi"

    def __post_init__(self) -> None:
        object.__setattr__(self, "delta", _check_delta(self.delta))
        regions = tuple(shifted_region(self.betas, d, self.delta) for d in range(self.betas.k))
        object.__setattr__(self, "_regions", regions)

    @property
    def T0(self) -> int:
        return self.betas.T0

    @property
    def k(self) -> int:
        return self.betas.k

    @property
    def preference_ranks(self) -> Tuple[int, ...]:
        return self.betas.preference_ranks

    def _lower_constraints_hold(self, y: np.ndarray, d: int) -> bool:
        ranks = self.preference_ranks
        for h, other in zip(self._regions[d].halfspaces, (o for o in range(self.k) if o != d)):
            if ranks[other] < ranks[d] and not h.contains(y):
                return False
        return True

    def assign(self, y_tilde: Sequence[float]) -> int:
        y = _as_point(y_tilde, self.T0)
        for d in most_preferred_first(self.preference_ranks):
            if self._regions[d].contains(y):
                return d
        for d in least_preferred_first(self.preference_ranks):
            if self._lower_constraints_hold(y, d):
                logger.debug("No intervention qualifies at %s; falling back to %d", np.array2string(y, precision=4), d)
                return d
        return least_preferred_first(self.preference_ranks)[0]

    def region(self, d: int) -> Region:
        if not (0 <= d < self.k):
            raise ValidationError(f"Intervention {d} outside 0..{self.k - 1}")
        return self._regions[d]


@dataclass(frozen=True, eq=False)
class Naive:
    """Argmax of the estimated rewards, ignoring strategic behavior."""

    betas: BetaSet

    name = "naive"

    def __post_init__(self) -> None:
        regions = []
        for d in range(self.betas.k):
            halfspaces = []
            for other in range(self.betas.k):
                if other == d:
                    continue
                strict = self.betas.preference_key(other) > self.betas.preference_key(d)
                halfspaces.append(Halfspace(self.betas[d] - self.betas[other], 0.0, strict=strict))
            regions.append(Region(tuple(halfspaces)))
        object.__setattr__(self, "_regions", tuple(regions))

    @property
    def T0(self) -> int:
        return self.betas.T0

    @property
    def k(self) -> int:
        return self.betas.k

    @property
    def preference_ranks(self) -> Tuple[int, ...]:
        return self.betas.preference_ranks

    def assign(self, y_tilde: Sequence[float]) -> int:
        y = _as_point(y_tilde, self.T0)
        for d in most_preferred_first(self.preference_ranks):
            if self._regions[d].contains(y):
                return d
        return argmax_preferred(self.betas.betas @ y, self.preference_ranks)

    def region(self, d: int) -> Region:
        if not (0 <= d < self.k):
            raise ValidationError(f"Intervention {d} outside 0..{self.k - 1}")
        return self._regions[d]


@dataclass(frozen=True, eq=False)
class MinIndexMembership:
    """Assigns the least-preferred intervention whose best-response ball contains the point.

    Finite mode takes unit centers grouped by type; continuum mode takes betas and
    uses the ball around every possible unit of each type.
    """

    delta: float
    centers: Optional[Tuple[np.ndarray, ...]] = None
    betas: Optional[BetaSet] = None
    ranks: Optional[Tuple[int, ...]] = None

    name = "min-index"

    def __post_init__(self) -> None:
        object.__setattr__(self, "delta", _check_delta(self.delta))
        if (self.centers is None) == (self.betas is None):
            raise ValidationError("MinIndexMembership needs exactly one of centers or betas")
        if self.centers is not None:
            groups = []
            dims = set()
            for group in self.centers:
                arr = np.asarray(group, dtype=float)
                if arr.size == 0:
                    arr = arr.reshape(0, 0)
                elif arr.ndim == 1:
                    arr = arr.reshape(1, -1)
                if arr.size:
                    dims.add(arr.shape[1])
                arr.setflags(write=False)
                groups.append(arr)
            if len(groups) < 2:
                raise ValidationError("MinIndexMembership needs k >= 2 center groups")
            if len(dims) != 1:
                raise DimensionMismatchError(f"Center groups must share one nonempty dimension, got {sorted(dims)}")
            object.__setattr__(self, "centers", tuple(groups))
            object.__setattr__(self, "_T0", dims.pop())
            k = len(groups)
        else:
            object.__setattr__(self, "_T0", self.betas.T0)
            k = self.betas.k
        ranks = self.ranks
        if ranks is None:
            ranks = self.betas.preference_ranks if self.betas is not None else tuple(range(k))
        if len(ranks) != k:
            raise DimensionMismatchError(f"ranks has {len(ranks)} entries, expected {k}")
        object.__setattr__(self, "ranks", tuple(int(r) for r in ranks))

    @property
    def mode(self) -> str:
        return "finite" if self.centers is not None else "continuum"

    @property
    def T0(self) -> int:
        return self._T0

    @property
    def k(self) -> int:
        return len(self.ranks)

    @property
    def preference_ranks(self) -> Tuple[int, ...]:
        return self.ranks

    def member(self, y: np.ndarray, d: int) -> bool:
        if self.centers is not None:
            group = self.centers[d]
            return group.size > 0 and in_ball(y, group, self.delta)
        return in_type_ball(y, self.betas, d, self.delta)

    def assign(self, y_tilde: Sequence[float]) -> int:
        y = _as_point(y_tilde, self.T0)
        order = least_preferred_first(self.ranks)
        for d in order:
            if self.member(y, d):
                return d
        return order[0]

    def region(self, d: int) -> Region:
        raise NonPolyhedralPolicyError("MinIndexMembership assignment sets are unions of balls, not halfspace intersections")

    def targets(self, y: np.ndarray, d: int) -> np.ndarray:
        """Points the search should aim at to land in intervention d."""
        if self.centers is not None:
            return self.centers[d] if self.centers[d].size else np.zeros((0, self.T0))
        result = project_onto_region(y, type_region(self.betas, d))
        return result.point.reshape(1, -1) if result.feasible else np.zeros((0, self.T0))


@dataclass(frozen=True, eq=False)
class SyntheticInterventions:
    """Donor-weighted counterfactual baseline.

    A unit's pre-period is regressed on each arm's donors by rank-p PCR and the
    donors' post-period rewards are averaged with those weights. The weights are
    linear in the pre-period, so the rule equals Naive on per-arm betas.
    """

    data: PanelDataset
    omega: RewardWeights
    p: int
    ranks: Optional[Tuple[int, ...]] = None

    name = "si"

    def __post_init__(self) -> None:
        from .config_schema import PCRConfig
        from .estimation import pcr_fit

        if self.p < 1:
            raise ValidationError(f"rank p must be >= 1, got {self.p}")
        if self.data.T - self.data.T0 != len(self.omega):
            raise DimensionMismatchError(
                f"omega has length {len(self.omega)}, post-period has {self.data.T - self.data.T0} steps"
            )
        betas = []
        for d in range(self.data.k):
            Y_pre, Y_post = self.data.arm(d)
            p = min(self.p, Y_pre.shape[0], Y_pre.shape[1])
            betas.append(pcr_fit(Y_pre, Y_post @ self.omega.omega, PCRConfig(p=p)))
        ranks = None if self.ranks is None else tuple(int(r) for r in self.ranks)
        object.__setattr__(self, "ranks", ranks)
        object.__setattr__(self, "_linear", Naive(BetaSet(np.vstack(betas), ranks)))

    @property
    def T0(self) -> int:
        return self.data.T0

    @property
    def k(self) -> int:
        return self.data.k

    @property
    def preference_ranks(self) -> Tuple[int, ...]:
        return self._linear.preference_ranks

    @property
    def betas(self) -> BetaSet:
        return self._linear.betas

    def linearized(self) -> Naive:
        return self._linear

    def assign(self, y_tilde: Sequence[float]) -> int:
        return self._linear.assign(y_tilde)

    def region(self, d: int) -> Region:
        raise NonPolyhedralPolicyError("SyntheticInterventions is defined through donor regressions; use linearized().region")


InterventionPolicy = Union[ShiftedTwo, ShiftedMulti, MinIndexMembership, Naive, SyntheticInterventions]


def assign(policy, y_tilde: Sequence[float]) -> int:
    return policy.assign(y_tilde)


def region(policy, d: int) -> Region:
    return policy.region(d)


@dataclass(frozen=True, eq=False)
class BestResponseOutcome:
    y_modified: np.ndarray
    achieved_intervention: int
    effort: float
    moved: bool
    approximate: bool = False


def _search_reach(policy: MinIndexMembership, y: np.ndarray, delta: float, d: int) -> Optional[np.ndarray]:
    """Smallest-effort point found along candidate rays that the policy assigns to d."""

    directions = []
    exact_radii = []
    for target in policy.targets(y, d):
        diff = target - y
        norm = float(np.linalg.norm(diff))
        if 0 < norm <= delta:
            directions.append(diff / norm)
            exact_radii.append(norm)
    ranks = policy.preference_ranks
    lower = [o for o in range(policy.k) if ranks[o] < ranks[d]]
    for o in lower:
        for target in policy.targets(y, o):
            diff = y - target
            norm = float(np.linalg.norm(diff))
            if norm > 0:
                directions.append(diff / norm)
                exact_radii.append(None)
    rng = np.random.default_rng(0)
    for u in rng.standard_normal((SEARCH_RANDOM_DIRECTIONS, y.shape[0])):
        directions.append(u / np.linalg.norm(u))
        exact_radii.append(None)

    grid = delta * np.arange(1, SEARCH_RADII + 1) / SEARCH_RADII
    best: Optional[np.ndarray] = None
    best_r = np.inf
    for u, exact in zip(directions, exact_radii):
        radii = grid if exact is None else np.sort(np.append(grid, exact))
        lo = 0.0
        for r in radii:
            if r >= best_r:
                break
            if policy.assign(y + r * u) == d:
                hi = r
                for _ in range(SEARCH_BISECTIONS):
                    mid = 0.5 * (lo + hi)
                    if policy.assign(y + mid * u) == d:
                        hi = mid
                    else:
                        lo = mid
                best_r, best = hi, y + hi * u
                break
            lo = r
    return best


def _project_reach(policy, y: np.ndarray, delta: float, d: int, eps: float) -> Optional[np.ndarray]:
    """Nearest point of region(d) within budget; a second pass pulls closed boundaries in by eps/2."""

    region = policy.region(d)
    for slack in (0.0, 0.5 * eps):
        result = project_onto_region(y, region.tightened(eps, slack))
        if not result.feasible or result.distance > delta + eps:
            return None
        if policy.assign(result.point) == d:
            return result.point
    return result.point


def best_response(policy, y: Sequence[float], delta: float) -> BestResponseOutcome:
    """Least-effort modification within budget `delta` reaching the most-preferred intervention.

    Interventions are tried from the most preferred down; the search stops at the
    first one the unit does not strictly prefer over its current assignment.
    """

    y = _as_point(y, policy.T0)
    delta = float(delta)
    if delta < 0:
        raise ValidationError(f"delta must be >= 0, got {delta}")
    current = policy.assign(y)
    ranks = policy.preference_ranks
    target_policy = policy.linearized() if isinstance(policy, SyntheticInterventions) else policy
    approximate = isinstance(policy, MinIndexMembership)
    eps = eps_strict(y)

    for d in most_preferred_first(ranks):
        if ranks[d] <= ranks[current]:
            break
        if approximate:
            point = _search_reach(policy, y, delta, d)
            if point is None:
                continue
        else:
            point = _project_reach(target_policy, y, delta, d, eps)
            if point is None:
                continue
        achieved = policy.assign(point)
        if achieved != d:
            logger.debug("Best response toward %d landed in %d; skipping", d, achieved)
            continue
        return BestResponseOutcome(
            y_modified=point,
            achieved_intervention=achieved,
            effort=float(np.linalg.norm(point - y)),
            moved=True,
            approximate=approximate,
        )
    return BestResponseOutcome(y_modified=y.copy(), achieved_intervention=current, effort=0.0, moved=False, approximate=approximate)


def strategic_assignments(policy, Y: np.ndarray, delta: float) -> Tuple[np.ndarray, np.ndarray]:
    """Assignments after every row of Y best-responds; also returns the efforts."""

    Y = np.asarray(Y, dtype=float)
    achieved = np.zeros(Y.shape[0], dtype=np.int64)
    efforts = np.zeros(Y.shape[0])
    for i, y in enumerate(Y):
        outcome = best_response(policy, y, delta) if delta > 0 else None
        if outcome is None:
            achieved[i] = policy.assign(y)
        else:
            achieved[i] = outcome.achieved_intervention
            efforts[i] = outcome.effort
    return achieved, efforts
