from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import nnls

from .errors import DimensionMismatchError, ValidationError
from .rewards import BetaSet


logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9
STRICT_RTOL = 1e-9
# 1 - h.u below this means the least-distance problem has no solution.
INFEASIBLE_DENOM = 1e-14

ProjectionMethod = Literal["active-set", "dykstra"]
SotMode = Literal["finite", "continuum"]


def eps_strict(y: np.ndarray) -> float:
    """Interior margin that makes '>' boundaries reachable."""
    return STRICT_RTOL * (1.0 + float(np.linalg.norm(y)))


@dataclass(frozen=True, eq=False)
class Halfspace:
    """{y : <a, y> >= b}, or > b when strict."""

    a: np.ndarray
    b: float
    strict: bool = False

    def __post_init__(self) -> None:
        a = np.asarray(self.a, dtype=float).reshape(-1)
        b = float(self.b)
        if not np.all(np.isfinite(a)) or not np.isfinite(b):
            raise ValidationError("Halfspace normal and offset must be finite")
        if not np.any(a) and b > 0:
            raise ValidationError(f"Halfspace with zero normal and offset {b} > 0 is empty")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.a))

    @property
    def is_trivial(self) -> bool:
        return not np.any(self.a)

    def contains(self, y: np.ndarray) -> bool:
        value = float(np.dot(self.a, y))
        return value > self.b if self.strict else value >= self.b


@dataclass(frozen=True, eq=False)
class Region:
    """Intersection of halfspaces; an empty list is all of R^T0."""

    halfspaces: Tuple[Halfspace, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "halfspaces", tuple(self.halfspaces))
        dims = {h.a.shape[0] for h in self.halfspaces}
        if len(dims) > 1:
            raise DimensionMismatchError(f"Halfspaces of mixed dimension: {sorted(dims)}")

    def __len__(self) -> int:
        return len(self.halfspaces)

    def contains(self, y: np.ndarray) -> bool:
        y = np.asarray(y, dtype=float)
        return all(h.contains(y) for h in self.halfspaces)

    def tightened(self, eps: float, slack: float = 0.0) -> "Region":
        """Replace every strict '> b' by the closed '>= b + eps * |a|'.

        Non-strict halfspaces move inward by `slack * |a|`.
        """

        out = []
        for h in self.halfspaces:
            if h.is_trivial:
                out.append(h)
            elif h.strict:
                out.append(Halfspace(h.a, h.b + eps * h.norm, strict=False))
            elif slack:
                out.append(Halfspace(h.a, h.b + slack * h.norm, strict=False))
            else:
                out.append(h)
        return Region(tuple(out))

    def translated(self, c: np.ndarray) -> "Region":
        c = np.asarray(c, dtype=float)
        return Region(tuple(Halfspace(h.a, h.b + float(np.dot(h.a, c)), h.strict) for h in self.halfspaces))


@dataclass(frozen=True, eq=False)
class ProjectionResult:
    point: np.ndarray
    distance: float
    kkt_residual: float
    iterations: int
    feasible: bool
    converged: bool = True
    multipliers: Optional[np.ndarray] = None


def type_region(betas: BetaSet, d: int) -> Region:
    """Pre-outcomes for which d maximizes the principal's reward."""

    _check_intervention(betas, d)
    halfspaces = []
    for other in range(betas.k):
        if other == d:
            continue
        a = betas[d] - betas[other]
        if np.any(a):
            halfspaces.append(Halfspace(a, 0.0, strict=False))
    return Region(tuple(halfspaces))


def shifted_region(betas: BetaSet, d: int, delta: float) -> Region:
    """Assignment set of d under the shifted-boundary rule.

    Boundaries against less-preferred interventions move inward by delta, those
    against more-preferred ones move outward, indifferent pairs stay unshifted.
    """

    _check_intervention(betas, d)
    ranks = betas.preference_ranks
    halfspaces = []
    for other in range(betas.k):
        if other == d:
            continue
        a = betas[d] - betas[other]
        shift = delta * float(np.linalg.norm(a))
        if ranks[other] < ranks[d]:
            halfspaces.append(Halfspace(a, shift, strict=True))
        elif ranks[other] > ranks[d]:
            halfspaces.append(Halfspace(a, -shift, strict=False))
        else:
            halfspaces.append(Halfspace(a, 0.0, strict=False))
    return Region(tuple(halfspaces))


def _check_intervention(betas: BetaSet, d: int) -> None:
    if not (0 <= d < betas.k):
        raise ValidationError(f"Intervention {d} outside 0..{betas.k - 1}")


def _normalized_constraints(region: Region, dim: int) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """Unit-norm (A, b) for A y >= b, or None when a trivial halfspace is unsatisfiable."""

    rows, offsets = [], []
    for h in region.halfspaces:
        if h.a.shape[0] != dim:
            raise DimensionMismatchError(f"Halfspace dimension {h.a.shape[0]} != point dimension {dim}")
        if h.is_trivial:
            if (h.strict and h.b >= 0) or (not h.strict and h.b > 0):
                return None
            continue
        n = h.norm
        rows.append(h.a / n)
        offsets.append(h.b / n)
    if not rows:
        return np.zeros((0, dim)), np.zeros(0)
    return np.vstack(rows), np.asarray(offsets)


def _kkt_residual(A: np.ndarray, b: np.ndarray, y_tilde: np.ndarray, point: np.ndarray, lam: np.ndarray) -> float:
    if A.shape[0] == 0:
        return float(np.linalg.norm(point - y_tilde))
    slack = A @ point - b
    primal = max(0.0, -float(slack.min()))
    stationarity = float(np.linalg.norm(point - y_tilde - A.T @ lam))
    complementarity = float(np.max(np.abs(lam * slack)))
    dual = max(0.0, -float(lam.min()))
    return max(primal, stationarity, complementarity, dual)


def _least_distance(A: np.ndarray, b: np.ndarray, y: np.ndarray) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """Lawson-Hanson least-distance programming through one NNLS solve.

    Returns (point, multipliers), or None if {A z >= b} is empty.
    """

    n = y.shape[0]
    h = b - A @ y
    if np.all(h <= 0.0):
        return y.copy(), np.zeros(A.shape[0])

    E = np.vstack([A.T, h[None, :]])
    f = np.zeros(n + 1)
    f[-1] = 1.0
    u, _ = nnls(E, f, maxiter=50 * (A.shape[0] + n + 1))
    r = E @ u - f
    denom = -r[-1]
    if denom <= INFEASIBLE_DENOM:
        return None
    x = -r[:n] / r[-1]
    return y + x, u / denom


def _polish_active_set(A: np.ndarray, b: np.ndarray, y: np.ndarray, lam: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Re-solve the equality-constrained projection on the active constraints."""

    active = np.flatnonzero(lam > 0.0)
    if active.size == 0:
        return y.copy(), np.zeros_like(lam)
    A_act = A[active]
    mu, *_ = np.linalg.lstsq(A_act @ A_act.T, b[active] - A_act @ y, rcond=None)
    point = y + A_act.T @ mu
    full = np.zeros_like(lam)
    full[active] = mu
    return point, full


def _dykstra(A: np.ndarray, b: np.ndarray, y: np.ndarray, tol: float, max_iter: int) -> Tuple[np.ndarray, np.ndarray, int, bool]:
    m = A.shape[0]
    x = y.copy()
    increments = np.zeros((m, y.shape[0]))
    lam = np.zeros(m)
    for it in range(1, max_iter + 1):
        for j in range(m):
            z = x + increments[j]
            gap = b[j] - float(A[j] @ z)
            x = z + gap * A[j] if gap > 0 else z
            increments[j] = z - x
        lam = -(increments @ A.T).diagonal()
        if _kkt_residual(A, b, y, x, lam) <= tol:
            return x, lam, it, True
    return x, lam, max_iter, False


def project_onto_region(
    y_tilde: Sequence[float],
    region: Region,
    tol: float = DEFAULT_TOL,
    method: ProjectionMethod = "active-set",
    max_iter: Optional[int] = None,
) -> ProjectionResult:
    """Euclidean projection of y_tilde onto the closure of `region`.

    Strict halfspaces are treated as closed here; callers wanting an interior point
    project onto `region.tightened(eps)` instead.
    """

    y = np.asarray(y_tilde, dtype=float).reshape(-1)
    dim = y.shape[0]
    constraints = _normalized_constraints(region, dim)
    if constraints is None:
        return ProjectionResult(point=y.copy(), distance=float("inf"), kkt_residual=float("inf"), iterations=0, feasible=False)
    A, b = constraints
    if A.shape[0] == 0:
        return ProjectionResult(point=y.copy(), distance=0.0, kkt_residual=0.0, iterations=0, feasible=True, multipliers=np.zeros(0))

    cap = max_iter if max_iter is not None else 100 * A.shape[0] * dim
    if method == "dykstra":
        point, lam, iterations, converged = _dykstra(A, b, y, tol, cap)
        residual = _kkt_residual(A, b, y, point, lam)
        if not converged:
            logger.warning("Dykstra projection stopped after %d sweeps with KKT residual %.3g", iterations, residual)
        return ProjectionResult(
            point=point,
            distance=float(np.linalg.norm(point - y)),
            kkt_residual=residual,
            iterations=iterations,
            feasible=bool(np.all(A @ point - b >= -tol)),
            converged=converged,
            multipliers=lam,
        )
    if method != "active-set":
        raise ValidationError(f"Unknown projection method {method!r}")

    try:
        solved = _least_distance(A, b, y)
    except RuntimeError as e:
        logger.warning("NNLS failed (%s); falling back to Dykstra", e)
        return project_onto_region(y, region, tol=tol, method="dykstra", max_iter=max_iter)
    if solved is None:
        return ProjectionResult(point=y.copy(), distance=float("inf"), kkt_residual=float("inf"), iterations=1, feasible=False)

    point, lam = solved
    residual = _kkt_residual(A, b, y, point, lam)
    iterations = 1
    if residual > tol:
        polished, polished_lam = _polish_active_set(A, b, y, lam)
        polished_residual = _kkt_residual(A, b, y, polished, polished_lam)
        iterations = 2
        if polished_residual < residual:
            point, lam, residual = polished, polished_lam, polished_residual
    converged = residual <= tol
    if not converged:
        logger.warning("Projection KKT residual %.3g exceeds tolerance %.3g", residual, tol)
    return ProjectionResult(
        point=point,
        distance=float(np.linalg.norm(point - y)),
        kkt_residual=residual,
        iterations=iterations,
        feasible=True,
        converged=converged,
        multipliers=lam,
    )


def in_ball(y_tilde: Sequence[float], center_set: Sequence[Sequence[float]] | np.ndarray, delta: float) -> bool:
    if delta <= 0:
        raise ValidationError(f"delta must be > 0, got {delta}")
    centers = np.asarray(center_set, dtype=float)
    if centers.size == 0:
        return False
    centers = centers.reshape(-1, np.asarray(y_tilde).reshape(-1).shape[0])
    dists = np.linalg.norm(centers - np.asarray(y_tilde, dtype=float).reshape(1, -1), axis=1)
    return bool(dists.min() <= delta)


def in_type_ball(y_tilde: Sequence[float], betas: BetaSet, d: int, delta: float, tol: float = DEFAULT_TOL) -> bool:
    """Whether some possible type-d unit can reach y_tilde with effort <= delta."""

    if delta <= 0:
        raise ValidationError(f"delta must be > 0, got {delta}")
    result = project_onto_region(y_tilde, type_region(betas, d), tol=tol)
    return result.feasible and result.distance <= delta + tol


# ---------- separation of types ----------


@dataclass(frozen=True, eq=False)
class UnitVerdict:
    unit: int
    type: int
    satisfied: bool
    certificate: str
    witness: Optional[np.ndarray] = None
    margin: float = 0.0


@dataclass(frozen=True, eq=False)
class SeparationReport:
    satisfied: bool
    mode: str
    delta: float
    verdicts: Tuple[UnitVerdict, ...] = ()

    @property
    def witnesses(self) -> Dict[int, np.ndarray]:
        return {v.unit: v.witness for v in self.verdicts if v.satisfied and v.witness is not None}

    @property
    def violations(self) -> List[int]:
        return [v.unit for v in self.verdicts if not v.satisfied]

    @property
    def low_confidence(self) -> bool:
        return any(v.certificate == "probable" for v in self.verdicts)


def _project_to_ball(W: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    offsets = W - center
    norms = np.linalg.norm(offsets, axis=1, keepdims=True)
    scale = np.minimum(1.0, radius / np.maximum(norms, 1e-300))
    return center + offsets * scale


def _min_dist(W: np.ndarray, C: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    d2 = ((W[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)
    j = d2.argmin(axis=1)
    return np.sqrt(d2[np.arange(W.shape[0]), j]), j


def _ascent_witness(
    y: np.ndarray,
    C: np.ndarray,
    delta: float,
    rng: np.random.Generator,
    n_random: int,
    steps: int,
) -> Tuple[np.ndarray, float]:
    """Multi-start projected ascent of g(w) = min_j |w - c_j| over the ball around y."""

    dim = y.shape[0]
    radius = delta * (1.0 - 1e-12)
    starts = [y]
    nearest = np.argsort(np.linalg.norm(C - y, axis=1))[:3]
    for j in nearest:
        diff = y - C[j]
        norm = np.linalg.norm(diff)
        if norm > 0:
            starts.append(y + radius * diff / norm)
            starts.append(y - radius * diff / norm)
    directions = rng.standard_normal((n_random, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    W = np.vstack([np.asarray(starts), y + radius * directions])

    best_g = _min_dist(W, C)[0]
    best_w = W.copy()
    for step in range(steps):
        g, j = _min_dist(W, C)
        improved = g > best_g
        best_g = np.where(improved, g, best_g)
        best_w[improved] = W[improved]
        grad = W - C[j]
        grad /= np.maximum(np.linalg.norm(grad, axis=1, keepdims=True), 1e-300)
        lr = delta * (0.05 * (1.0 - step / steps) + 1e-3)
        W = _project_to_ball(W + lr * grad, y, radius)
    g, _ = _min_dist(W, C)
    improved = g > best_g
    best_g = np.where(improved, g, best_g)
    best_w[improved] = W[improved]
    best_idx = int(np.argmax(best_g))
    return best_w[best_idx], float(best_g[best_idx])


def _grid_certificate(
    y: np.ndarray, C: np.ndarray, delta: float, step_fraction: float, chunk: int = 20000
) -> Tuple[Optional[np.ndarray], float]:
    """Scan a grid over the ball; return (uncovered point or None, best min-distance)."""

    dim = y.shape[0]
    h = delta * step_fraction
    axis = np.arange(-delta, delta + 0.5 * h, h)
    best_g = -np.inf
    best_point = None
    for first in axis:
        if dim == 1:
            pts = np.array([[first]])
        else:
            rest = np.stack(np.meshgrid(*([axis] * (dim - 1)), indexing="ij"), axis=-1).reshape(-1, dim - 1)
            pts = np.hstack([np.full((rest.shape[0], 1), first), rest])
        pts = pts[np.linalg.norm(pts, axis=1) <= delta]
        for start in range(0, pts.shape[0], chunk):
            block = y + pts[start : start + chunk]
            g, _ = _min_dist(block, C)
            idx = int(np.argmax(g))
            if g[idx] > best_g:
                best_g, best_point = float(g[idx]), block[idx]
            if best_g > delta:
                return best_point, best_g
    return None, best_g


def _ranks_for(units_types: Sequence[int], betas: Optional[BetaSet], preference_ranks: Optional[Sequence[int]]) -> Tuple[int, ...]:
    if preference_ranks is not None:
        return tuple(preference_ranks)
    if betas is not None:
        return betas.preference_ranks
    k = max(units_types) + 1 if units_types else 0
    return tuple(range(k))


def separation_of_types(
    units: Sequence[Tuple[Sequence[float], int]],
    delta: float,
    mode: SotMode = "finite",
    betas: Optional[BetaSet] = None,
    preference_ranks: Optional[Sequence[int]] = None,
    seed: int = 0,
    n_random: int = 32,
    ascent_steps: int = 500,
    grid_step_fraction: float = 1.0 / 200.0,
    tol: float = DEFAULT_TOL,
) -> SeparationReport:
    """Check that no unit's best-response ball is covered by lower-type balls.

    finite: balls around the listed units only; verdicts in dimension <= 3 carry
    a grid certificate, above that a "probable" sampling verdict.
    continuum: every unit must reach the shifted assignment set of its type.
    """

    if delta <= 0:
        raise ValidationError(f"delta must be > 0, got {delta}")
    Y = [np.asarray(y, dtype=float).reshape(-1) for y, _ in units]
    types = [int(t) for _, t in units]
    if len({y.shape[0] for y in Y}) > 1:
        raise DimensionMismatchError("All units must have the same pre-period length")

    if mode == "continuum":
        if betas is None:
            raise ValidationError("continuum separation_of_types needs betas")
        return _continuum_sot(Y, types, delta, betas, tol)
    if mode != "finite":
        raise ValidationError(f"Unknown mode {mode!r}")

    ranks = _ranks_for(types, betas, preference_ranks)
    rng = np.random.default_rng(seed)
    verdicts = []
    for i, (y, t) in enumerate(zip(Y, types)):
        lower = [Y[j] for j in range(len(Y)) if ranks[types[j]] < ranks[t]]
        if not lower:
            verdicts.append(UnitVerdict(i, t, True, "no-lower-types", witness=y.copy(), margin=float("inf")))
            continue
        C = np.vstack(lower)
        C = C[np.linalg.norm(C - y, axis=1) <= 2.0 * delta + tol]
        if C.shape[0] == 0:
            verdicts.append(UnitVerdict(i, t, True, "witness", witness=y.copy(), margin=float("inf")))
            continue

        w, g = _ascent_witness(y, C, delta, rng, n_random, ascent_steps)
        if g > delta:
            verdicts.append(UnitVerdict(i, t, True, "witness", witness=w, margin=g - delta))
            continue
        if y.shape[0] <= 3:
            w_grid, g_grid = _grid_certificate(y, C, delta, grid_step_fraction)
            if w_grid is not None:
                verdicts.append(UnitVerdict(i, t, True, "witness", witness=w_grid, margin=g_grid - delta))
            else:
                verdicts.append(UnitVerdict(i, t, False, "grid", margin=max(g, g_grid) - delta))
        else:
            verdicts.append(UnitVerdict(i, t, False, "probable", margin=g - delta))

    return SeparationReport(
        satisfied=all(v.satisfied for v in verdicts), mode="finite", delta=delta, verdicts=tuple(verdicts)
    )


def _continuum_sot(Y: List[np.ndarray], types: List[int], delta: float, betas: BetaSet, tol: float) -> SeparationReport:
    verdicts = []
    for i, (y, t) in enumerate(zip(Y, types)):
        if y.shape[0] != betas.T0:
            raise DimensionMismatchError(f"Unit {i} has length {y.shape[0]}, betas have T0={betas.T0}")
        eps = eps_strict(y)
        result = project_onto_region(y, shifted_region(betas, t, delta).tightened(eps), tol=tol)
        ok = result.feasible and result.distance <= delta + eps + tol
        verdicts.append(
            UnitVerdict(
                i,
                t,
                ok,
                "qp",
                witness=result.point if ok else None,
                margin=delta - result.distance,
            )
        )
    return SeparationReport(
        satisfied=all(v.satisfied for v in verdicts), mode="continuum", delta=delta, verdicts=tuple(verdicts)
    )
