from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Literal, Optional, Sequence

import numpy as np

from .errors import DimensionMismatchError, OutcomeBoundError, ValidationError


logger = logging.getLogger(__name__)

BoundCheck = Literal["error", "warn", "off"]

# Standard-normal draws beyond this many deviations are redrawn.
TRUNCATION = 4.0
BOUND_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class LatentFactorSpec:
    """Ground truth of the world.

    `U[d, t]` is the factor u_{t+1}^{(d)} (time is 1-based in the model, 0-based here).
    """

    U: np.ndarray
    T0: int
    sigma: float = 0.0

    def __post_init__(self) -> None:
        U = np.asarray(self.U, dtype=float)
        if U.ndim != 3:
            raise DimensionMismatchError(f"U must have shape (k, T, s), got {U.shape}")
        k, T, s = U.shape
        if s < 1 or k < 1:
            raise DimensionMismatchError(f"U must have k >= 1 and s >= 1, got shape {U.shape}")
        if not (1 <= self.T0 < T):
            raise DimensionMismatchError(f"Need 1 <= T0 < T, got T0={self.T0}, T={T}")
        if not np.all(np.isfinite(U)):
            raise ValidationError("U contains non-finite entries")
        if not (self.sigma >= 0.0) or not np.isfinite(self.sigma):
            raise ValidationError(f"sigma must be finite and >= 0, got {self.sigma}")
        U.setflags(write=False)
        object.__setattr__(self, "U", U)

    @property
    def k(self) -> int:
        return self.U.shape[0]

    @property
    def T(self) -> int:
        return self.U.shape[1]

    @property
    def s(self) -> int:
        return self.U.shape[2]

    @property
    def U_pre(self) -> np.ndarray:
        """T0 x s control factors of the pre-intervention period."""
        return self.U[0, : self.T0, :]

    @property
    def U_post(self) -> np.ndarray:
        """k x (T - T0) x s post-intervention factors."""
        return self.U[:, self.T0 :, :]


@dataclass(frozen=True, eq=False)
class UnitFactors:
    V: np.ndarray

    def __post_init__(self) -> None:
        V = np.asarray(self.V, dtype=float)
        if V.ndim == 1:
            V = V.reshape(1, -1)
        if V.ndim != 2:
            raise DimensionMismatchError(f"V must have shape (m, s), got {V.shape}")
        V.setflags(write=False)
        object.__setattr__(self, "V", V)

    @property
    def m(self) -> int:
        return self.V.shape[0]

    @property
    def s(self) -> int:
        return self.V.shape[1]


@dataclass(frozen=True, eq=False)
class CounterfactualPanel:
    """`expected[i, d, t]` = <u_t^(d), v_i>; `noisy` adds one noise draw per cell.

    The pre-period noise of a unit is shared by all arms.
    """

    expected: np.ndarray
    noisy: np.ndarray
    seed: int
    T0: int

    @property
    def m(self) -> int:
        return self.expected.shape[0]

    @property
    def k(self) -> int:
        return self.expected.shape[1]

    @property
    def T(self) -> int:
        return self.expected.shape[2]


@dataclass(frozen=True, eq=False)
class PanelDataset:
    y_pre: np.ndarray
    assigned: np.ndarray
    y_post: np.ndarray
    k: int
    unit_ids: Optional[tuple] = None

    def __post_init__(self) -> None:
        y_pre = np.asarray(self.y_pre, dtype=float)
        y_post = np.asarray(self.y_post, dtype=float)
        assigned = np.asarray(self.assigned, dtype=np.int64)
        if y_pre.ndim != 2 or y_post.ndim != 2 or assigned.ndim != 1:
            raise DimensionMismatchError("y_pre and y_post must be matrices and assigned a vector")
        m = y_pre.shape[0]
        if y_post.shape[0] != m or assigned.shape[0] != m:
            raise DimensionMismatchError(
                f"Row counts differ: y_pre {y_pre.shape[0]}, y_post {y_post.shape[0]}, assigned {assigned.shape[0]}"
            )
        if self.k < 1:
            raise ValidationError(f"k must be >= 1, got {self.k}")
        if m and (assigned.min() < 0 or assigned.max() >= self.k):
            raise ValidationError(f"assigned interventions must lie in 0..{self.k - 1}")
        if self.unit_ids is not None and len(self.unit_ids) != m:
            raise DimensionMismatchError("unit_ids length must equal the number of units")
        for arr in (y_pre, y_post, assigned):
            arr.setflags(write=False)
        object.__setattr__(self, "y_pre", y_pre)
        object.__setattr__(self, "y_post", y_post)
        object.__setattr__(self, "assigned", assigned)

    @property
    def m(self) -> int:
        return self.y_pre.shape[0]

    @property
    def T0(self) -> int:
        return self.y_pre.shape[1]

    @property
    def T(self) -> int:
        return self.y_pre.shape[1] + self.y_post.shape[1]

    @property
    def indices(self) -> List[np.ndarray]:
        """N^(d) for every intervention d, as sorted index arrays."""
        return [np.flatnonzero(self.assigned == d) for d in range(self.k)]

    def arm(self, d: int) -> tuple[np.ndarray, np.ndarray]:
        idx = np.flatnonzero(self.assigned == d)
        return self.y_pre[idx], self.y_post[idx]


def unit_rng(seed: int, unit: int) -> np.random.Generator:
    """Per-unit stream: the same (seed, unit) always yields the same draws."""

    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(unit,)))


def truncated_normal(rng: np.random.Generator, size: int | tuple, truncation: float = TRUNCATION) -> np.ndarray:
    z = rng.standard_normal(size)
    bad = np.abs(z) > truncation
    while np.any(bad):
        z[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(z) > truncation
    return z


def _check_bound(expected: np.ndarray, severity: BoundCheck) -> None:
    if severity == "off":
        return
    over = np.argwhere(np.abs(expected) > 1.0 + BOUND_TOL)
    if over.size == 0:
        return
    cells = [(int(i), int(d), int(t) + 1) for i, d, t in over]
    worst = float(np.max(np.abs(expected)))
    if severity == "error":
        raise OutcomeBoundError(cells, worst)
    logger.warning("%d expected outcome cells exceed |E[y]| <= 1 (max %.6g)", len(cells), worst)


def generate_counterfactuals(
    spec: LatentFactorSpec,
    V: UnitFactors,
    seed: int,
    noise_scale: Optional[Sequence[float]] = None,
    bound_check: BoundCheck = "error",
) -> CounterfactualPanel:
    if V.s != spec.s:
        raise DimensionMismatchError(f"Unit factors have length {V.s}, spec latent dimension is {spec.s}")
    if seed < 0:
        raise ValidationError(f"seed must be non-negative, got {seed}")

    expected = np.einsum("dts,is->idt", spec.U, V.V)
    _check_bound(expected, bound_check)

    m, k, T, T0 = V.m, spec.k, spec.T, spec.T0
    scales = np.ones(m) if noise_scale is None else np.asarray(noise_scale, dtype=float)
    if scales.shape != (m,):
        raise DimensionMismatchError(f"noise_scale must have length {m}")
    if np.any(scales < 0):
        raise ValidationError("noise_scale entries must be >= 0")

    noise = np.zeros((m, k, T))
    if spec.sigma > 0:
        for i in range(m):
            rng = unit_rng(seed, i)
            sd = spec.sigma * scales[i]
            pre = truncated_normal(rng, T0)
            post = truncated_normal(rng, (k, T - T0))
            noise[i, :, :T0] = sd * pre
            noise[i, :, T0:] = sd * post

    noisy = expected + noise
    expected.setflags(write=False)
    noisy.setflags(write=False)
    return CounterfactualPanel(expected=expected, noisy=noisy, seed=seed, T0=T0)


def observe(panel: CounterfactualPanel, assignment: Sequence[int]) -> PanelDataset:
    assigned = np.asarray(assignment, dtype=np.int64)
    if assigned.shape != (panel.m,):
        raise DimensionMismatchError(f"assignment has length {assigned.shape[0] if assigned.ndim else 0}, expected {panel.m}")
    if panel.m and (assigned.min() < 0 or assigned.max() >= panel.k):
        raise ValidationError(f"assignment values must lie in 0..{panel.k - 1}")

    y_pre = panel.noisy[:, 0, : panel.T0].copy()
    y_post = panel.noisy[np.arange(panel.m), assigned, panel.T0 :].copy()
    return PanelDataset(y_pre=y_pre, assigned=assigned, y_post=y_post, k=panel.k)


def rct_assign(m: int, k: int, seed: int) -> np.ndarray:
    """Uniform random assignment, redrawn until every arm is nonempty."""

    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if m < k:
        raise ValidationError(f"Need at least one unit per arm: m={m} < k={k}")

    rng = np.random.default_rng(seed)
    while True:
        assigned = rng.integers(0, k, size=m)
        if np.all(np.bincount(assigned, minlength=k) > 0):
            return assigned


def _unit_ball(rng: np.random.Generator, n: int, dim: int, radius: float) -> np.ndarray:
    directions = rng.standard_normal((n, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = radius * rng.uniform(0.0, 1.0, size=(n, 1)) ** (1.0 / dim)
    return directions * radii


def random_latent_spec(s: int, T0: int, T: int, k: int, sigma: float, rng: np.random.Generator) -> LatentFactorSpec:
    """Factors drawn inside the unit ball, so |<u, v>| <= 1 for any unit-ball v."""

    U = _unit_ball(rng, k * T, s, 1.0).reshape(k, T, s)
    # The pre-period is always under control.
    U[1:, :T0, :] = U[0, :T0, :]
    return LatentFactorSpec(U=U, T0=T0, sigma=sigma)


def sample_unit_factors(m: int, s: int, rng: np.random.Generator, radius: float = 1.0) -> UnitFactors:
    if not (0.0 < radius <= 1.0):
        raise ValidationError(f"radius must lie in (0, 1], got {radius}")
    if m == 0:
        return UnitFactors(V=np.zeros((0, s)))
    return UnitFactors(V=_unit_ball(rng, m, s, radius))
