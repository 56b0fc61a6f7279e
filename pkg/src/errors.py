from __future__ import annotations

from typing import Sequence, Tuple


class StrategioError(Exception):
    pass


class ValidationError(StrategioError, ValueError):
    pass


class SolverError(StrategioError, RuntimeError):
    pass


class DimensionMismatchError(ValidationError):
    pass


class OutcomeBoundError(ValidationError):
    """Raised when an expected outcome leaves [-1, 1].

    `cells` holds the offending (unit, intervention, time) triples, time 1-based.
    """

    def __init__(self, cells: Sequence[Tuple[int, int, int]], worst: float) -> None:
        self.cells = list(cells)
        self.worst = worst
        preview = ", ".join(f"(i={i}, d={d}, t={t})" for i, d, t in self.cells[:5])
        more = f" and {len(self.cells) - 5} more" if len(self.cells) > 5 else ""
        super().__init__(
            f"Expected outcomes must satisfy |E[y]| <= 1; max |E[y]| = {worst:.6g} at {preview}{more}"
        )


class RankDeficiencyError(ValidationError):
    pass


class EmptyArmError(ValidationError):
    pass


class DegenerateBoundaryError(ValidationError):
    pass


class NonPolyhedralPolicyError(ValidationError):
    pass


class ZeroDenominatorError(ValidationError):
    pass


class CsvFormatError(ValidationError):
    def __init__(self, message: str, rows: Sequence[int] = ()) -> None:
        self.rows = list(rows)
        if self.rows:
            shown = ", ".join(str(r) for r in self.rows[:10])
            more = " ..." if len(self.rows) > 10 else ""
            message = f"{message} (rows: {shown}{more})"
        super().__init__(message)


class InvariantViolation(SolverError):
    pass
