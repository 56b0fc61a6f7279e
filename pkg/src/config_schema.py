from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Optional, Tuple


PolicyName = Literal["shifted-two", "shifted-multi", "min-index", "naive", "si"]
UnitDistribution = Literal["ball", "semi-synthetic"]
BoundSeverity = Literal["error", "warn", "off"]

POLICY_NAMES: Tuple[str, ...] = ("shifted-two", "shifted-multi", "min-index", "naive", "si")


@dataclass(frozen=True)
class PCRConfig:
    """p=None selects the rank by the largest spectral gap at fit time."""

    p: Optional[int] = None
    rho: float = 0.0
    min_singular_ratio: float = 1e-10

    def __post_init__(self) -> None:
        if self.p is not None and self.p < 1:
            raise ValueError(f"pcr.p must be >= 1, got {self.p}")
        if self.rho < 0:
            raise ValueError(f"pcr.rho must be >= 0, got {self.rho}")
        if not (0 <= self.min_singular_ratio < 1):
            raise ValueError(f"pcr.min_singular_ratio must lie in [0, 1), got {self.min_singular_ratio}")


@dataclass(frozen=True)
class SpecParams:
    s: int = 3
    T0: int = 5
    T: int = 8
    k: int = 2
    sigma: float = 0.05


@dataclass(frozen=True)
class ExperimentConfig:
    spec: SpecParams = field(default_factory=SpecParams)
    m_train: int = 135
    m_test: int = 135
    delta_true: float = 0.2
    delta_hat: Optional[float] = None
    omega: Optional[Tuple[float, ...]] = None
    pcr: PCRConfig = field(default_factory=PCRConfig)
    seed: Optional[int] = None
    policy: PolicyName = "shifted-two"
    units: UnitDistribution = "ball"
    bound_check: BoundSeverity = "warn"
    n_seeds: int = 10

    @property
    def effective_delta_hat(self) -> float:
        return self.delta_true if self.delta_hat is None else self.delta_hat

    @property
    def effective_omega(self) -> Tuple[float, ...]:
        return self.omega if self.omega is not None else (1.0,) * (self.spec.T - self.spec.T0)


@dataclass(frozen=True)
class SIFailureConfig:
    """Two-type instance in which synthetic interventions can be gamed."""

    delta: float = 0.4
    separation_ratio: float = 0.5
    sigma: float = 0.02
    m_train: int = 200
    m_test: int = 500
    kappa: float = 0.3
    rank: int = 2
    seed: int = 0
