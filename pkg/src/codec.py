from __future__ import annotations

from dataclasses import asdict
from typing import Any, Dict, List

import numpy as np

from .errors import ValidationError
from .estimation import LearnedBetas
from .geometry import Region, SeparationReport
from .harness import Metrics
from .panel_model import PanelDataset
from .policies import MinIndexMembership, Naive, ShiftedMulti, ShiftedTwo, SyntheticInterventions
from .rewards import BetaSet, RewardWeights


def _floats(a: np.ndarray) -> List[Any]:
    return np.asarray(a, dtype=float).tolist()


def betaset_to_dict(betas: BetaSet) -> Dict[str, Any]:
    return {
        "k": betas.k,
        "T0": betas.T0,
        "betas": _floats(betas.betas),
        "preference_ranks": list(betas.preference_ranks),
    }


def betaset_from_dict(data: Dict[str, Any]) -> BetaSet:
    try:
        betas = BetaSet(np.asarray(data["betas"], dtype=float), data.get("preference_ranks"))
    except (KeyError, TypeError) as e:
        raise ValidationError(f"Invalid BetaSet JSON: {e}") from None
    if "k" in data and data["k"] != betas.k or "T0" in data and data["T0"] != betas.T0:
        raise ValidationError("BetaSet JSON k/T0 do not match the betas matrix")
    return betas


def region_to_list(region: Region) -> List[Dict[str, Any]]:
    return [{"a": _floats(h.a), "b": h.b, "strict": h.strict} for h in region.halfspaces]


def _regions(policy) -> List[List[Dict[str, Any]]]:
    return [region_to_list(policy.region(d)) for d in range(policy.k)]


def dataset_to_dict(data: PanelDataset) -> Dict[str, Any]:
    return {
        "k": data.k,
        "y_pre": _floats(data.y_pre),
        "y_post": _floats(data.y_post),
        "assigned": data.assigned.tolist(),
    }


def dataset_from_dict(data: Dict[str, Any]) -> PanelDataset:
    return PanelDataset(
        y_pre=np.asarray(data["y_pre"], dtype=float),
        assigned=np.asarray(data["assigned"], dtype=np.int64),
        y_post=np.asarray(data["y_post"], dtype=float),
        k=int(data["k"]),
    )


def policy_to_dict(policy) -> Dict[str, Any]:
    if isinstance(policy, ShiftedTwo):
        return {"variant": policy.name, "beta0": _floats(policy.beta0), "beta1": _floats(policy.beta1), "delta": policy.delta, "regions": _regions(policy)}
    if isinstance(policy, ShiftedMulti):
        return {"variant": policy.name, "betas": betaset_to_dict(policy.betas), "delta": policy.delta, "regions": _regions(policy)}
    if isinstance(policy, Naive):
        return {"variant": policy.name, "betas": betaset_to_dict(policy.betas), "regions": _regions(policy)}
    if isinstance(policy, MinIndexMembership):
        out: Dict[str, Any] = {"variant": policy.name, "delta": policy.delta, "ranks": list(policy.ranks)}
        if policy.centers is not None:
            out["centers"] = [_floats(c) for c in policy.centers]
        else:
            out["betas"] = betaset_to_dict(policy.betas)
        return out
    if isinstance(policy, SyntheticInterventions):
        return {
            "variant": policy.name,
            "p": policy.p,
            "omega": _floats(policy.omega.omega),
            "ranks": None if policy.ranks is None else list(policy.ranks),
            "data": dataset_to_dict(policy.data),
        }
    raise ValidationError(f"Cannot serialize policy of type {type(policy).__name__}")


def policy_from_dict(data: Dict[str, Any]):
    variant = data.get("variant")
    try:
        if variant == "shifted-two":
            return ShiftedTwo(np.asarray(data["beta0"]), np.asarray(data["beta1"]), data["delta"])
        if variant == "shifted-multi":
            return ShiftedMulti(betaset_from_dict(data["betas"]), data["delta"])
        if variant == "naive":
            return Naive(betaset_from_dict(data["betas"]))
        if variant == "min-index":
            ranks = tuple(data["ranks"]) if data.get("ranks") is not None else None
            if "centers" in data:
                return MinIndexMembership(data["delta"], centers=tuple(np.asarray(c, dtype=float) for c in data["centers"]), ranks=ranks)
            return MinIndexMembership(data["delta"], betas=betaset_from_dict(data["betas"]), ranks=ranks)
        if variant == "si":
            ranks = tuple(data["ranks"]) if data.get("ranks") is not None else None
            return SyntheticInterventions(dataset_from_dict(data["data"]), RewardWeights(data["omega"]), int(data["p"]), ranks)
    except (KeyError, TypeError) as e:
        raise ValidationError(f"Invalid {variant} policy JSON: {e}") from None
    raise ValidationError(f"Unknown policy variant {variant!r}")


def learned_betas_to_dict(learned: LearnedBetas) -> Dict[str, Any]:
    return {
        "beta_hats": betaset_to_dict(learned.beta_hats),
        "singular_values": [_floats(sv) for sv in learned.singular_values],
        "snr": list(learned.snr),
        "n": list(learned.n),
        "ranks": list(learned.ranks),
        "well_balancing": learned.well_balancing,
    }


def separation_report_to_dict(report: SeparationReport) -> Dict[str, Any]:
    return {
        "verdict": "SATISFIED" if report.satisfied else "VIOLATED",
        "mode": report.mode,
        "delta": report.delta,
        "low_confidence": report.low_confidence,
        "units": [
            {
                "unit": v.unit,
                "type": v.type,
                "satisfied": v.satisfied,
                "certificate": v.certificate,
                "margin": v.margin if np.isfinite(v.margin) else None,
                "witness": None if v.witness is None else _floats(v.witness),
            }
            for v in report.verdicts
        ],
    }


def metrics_to_dict(metrics: Metrics, include_records: bool = False) -> Dict[str, Any]:
    out = asdict(metrics)
    records = out.pop("records")
    if include_records:
        out["records"] = records
    return out
