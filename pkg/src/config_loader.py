from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, Optional

from .config_schema import POLICY_NAMES, ExperimentConfig, PCRConfig, SIFailureConfig, SpecParams


def _read_json_object(config_path: str | Path) -> Dict[str, Any]:
    p = Path(config_path)
    if not p.exists():
        raise FileNotFoundError(f"Config file not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8-sig"))
    except json.JSONDecodeError as e:
        raise ValueError(f"Config {p} is not valid JSON: {e}") from None
    if not isinstance(data, dict):
        raise ValueError(f"Config {p} must contain a JSON object")
    return data


def _int(data: Dict[str, Any], key: str, default: Optional[int], minimum: Optional[int] = None, prefix: str = "") -> Optional[int]:
    value = data.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValueError(f"{prefix}{key} must be an integer")
    if minimum is not None and value < minimum:
        raise ValueError(f"{prefix}{key} must be >= {minimum}, got {value}")
    return value


def _float(data: Dict[str, Any], key: str, default: Optional[float], minimum: Optional[float] = None, prefix: str = "") -> Optional[float]:
    value = data.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError(f"{prefix}{key} must be a number")
    if minimum is not None and value < minimum:
        raise ValueError(f"{prefix}{key} must be >= {minimum}, got {value}")
    return float(value)


def _choice(data: Dict[str, Any], key: str, default: str, allowed: tuple) -> str:
    value = data.get(key, default)
    if value not in allowed:
        raise ValueError(f"{key} must be one of {', '.join(allowed)}; got {value!r}")
    return value


def _object(data: Dict[str, Any], key: str) -> Dict[str, Any]:
    raw = data.get(key, {})
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ValueError(f"{key} must be an object")
    return raw


def experiment_config_from_dict(data: Dict[str, Any]) -> ExperimentConfig:
    """Build and validate an ExperimentConfig.

    Schema (all keys optional):

    {
      "spec": {"s": 3, "T0": 5, "T": 8, "k": 2, "sigma": 0.05},
      "m_train": 135, "m_test": 135,
      "delta_true": 0.2, "delta_hat": 0.2,
      "omega": [1, 1, 1],
      "pcr": {"p": 3, "rho": 0.0, "min_singular_ratio": 1e-10},
      "seed": 0,
      "policy": "shifted-two",
      "units": "ball" | "semi-synthetic",
      "bound_check": "error" | "warn" | "off",
      "n_seeds": 10
    }
    """

    defaults = ExperimentConfig()
    spec_raw = _object(data, "spec")
    spec = SpecParams(
        s=_int(spec_raw, "s", defaults.spec.s, 1, "spec."),
        T0=_int(spec_raw, "T0", defaults.spec.T0, 1, "spec."),
        T=_int(spec_raw, "T", defaults.spec.T, 2, "spec."),
        k=_int(spec_raw, "k", defaults.spec.k, 2, "spec."),
        sigma=_float(spec_raw, "sigma", defaults.spec.sigma, 0.0, "spec."),
    )
    if spec.T0 >= spec.T:
        raise ValueError(f"spec.T0 must be < spec.T, got T0={spec.T0}, T={spec.T}")

    pcr_raw = _object(data, "pcr")
    pcr = PCRConfig(
        p=_int(pcr_raw, "p", None, 1, "pcr."),
        rho=_float(pcr_raw, "rho", 0.0, 0.0, "pcr."),
        min_singular_ratio=_float(pcr_raw, "min_singular_ratio", 1e-10, 0.0, "pcr."),
    )

    omega_raw = data.get("omega")
    omega = None
    if omega_raw is not None:
        if not isinstance(omega_raw, list) or not all(isinstance(w, (int, float)) and not isinstance(w, bool) for w in omega_raw):
            raise ValueError("omega must be a list of numbers")
        if len(omega_raw) != spec.T - spec.T0:
            raise ValueError(f"omega must have T - T0 = {spec.T - spec.T0} entries, got {len(omega_raw)}")
        omega = tuple(float(w) for w in omega_raw)

    delta_true = _float(data, "delta_true", defaults.delta_true)
    if delta_true is None or delta_true <= 0:
        raise ValueError(f"delta_true must be > 0, got {delta_true}")

    m_train = _int(data, "m_train", defaults.m_train, spec.k)
    m_test = _int(data, "m_test", defaults.m_test, 0)
    if 0 < m_test < spec.k:
        raise ValueError(f"m_test must be 0 or >= k={spec.k}, got {m_test}")

    cfg = ExperimentConfig(
        spec=spec,
        m_train=m_train,
        m_test=m_test,
        delta_true=delta_true,
        delta_hat=_float(data, "delta_hat", None, 0.0),
        omega=omega,
        pcr=pcr,
        seed=_int(data, "seed", None, 0),
        policy=_choice(data, "policy", defaults.policy, POLICY_NAMES),
        units=_choice(data, "units", defaults.units, ("ball", "semi-synthetic")),
        bound_check=_choice(data, "bound_check", defaults.bound_check, ("error", "warn", "off")),
        n_seeds=_int(data, "n_seeds", defaults.n_seeds, 1),
    )
    if cfg.policy == "shifted-two" and spec.k != 2:
        raise ValueError(f"policy shifted-two needs spec.k = 2, got {spec.k}")
    if cfg.units == "semi-synthetic" and (spec.s, spec.T0, spec.T, spec.k) != (3, 5, 8, 2):
        raise ValueError("units=semi-synthetic fixes spec to s=3, T0=5, T=8, k=2")
    return cfg


def load_experiment_config(config_path: str | Path) -> ExperimentConfig:
    return experiment_config_from_dict(_read_json_object(config_path))


def experiment_config_to_dict(cfg: ExperimentConfig) -> Dict[str, Any]:
    data = asdict(cfg)
    data["omega"] = list(cfg.omega) if cfg.omega is not None else None
    return data


def si_failure_config_from_dict(data: Dict[str, Any]) -> SIFailureConfig:
    d = SIFailureConfig()
    delta = _float(data, "delta", d.delta)
    if delta is None or delta <= 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    ratio = _float(data, "separation_ratio", d.separation_ratio, 0.0)
    return SIFailureConfig(
        delta=delta,
        separation_ratio=ratio,
        sigma=_float(data, "sigma", d.sigma, 0.0),
        m_train=_int(data, "m_train", d.m_train, 4),
        m_test=_int(data, "m_test", d.m_test, 1),
        kappa=_float(data, "kappa", d.kappa, 0.0),
        rank=_int(data, "rank", d.rank, 1),
        seed=_int(data, "seed", d.seed, 0),
    )


def load_si_failure_config(config_path: str | Path) -> SIFailureConfig:
    return si_failure_config_from_dict(_read_json_object(config_path))
