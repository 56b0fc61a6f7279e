from __future__ import annotations

import io
import logging
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from .errors import CsvFormatError
from .logging_utils import write_text
from .panel_model import PanelDataset


logger = logging.getLogger(__name__)

COLUMNS = ("unit_id", "t", "outcome", "assigned_intervention")
FLOAT_FORMAT = "%.17g"


def panel_to_frame(data: PanelDataset) -> pd.DataFrame:
    ids = data.unit_ids if data.unit_ids is not None else tuple(range(data.m))
    outcomes = np.hstack([data.y_pre, data.y_post])
    return pd.DataFrame(
        {
            "unit_id": np.repeat(np.asarray(ids, dtype=object), data.T),
            "t": np.tile(np.arange(1, data.T + 1), data.m),
            "outcome": outcomes.reshape(-1),
            "assigned_intervention": np.repeat(data.assigned, data.T),
        },
        columns=list(COLUMNS),
    )


def export_csv(data: PanelDataset, path: str | Path) -> None:
    buf = io.StringIO()
    panel_to_frame(data).to_csv(buf, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    write_text(path, buf.getvalue())


def _file_rows(mask: pd.Series) -> list[int]:
    # Header is line 1.
    return [int(i) + 2 for i in np.flatnonzero(mask.to_numpy())]


def ingest_csv(path: str | Path, T0: int, k: Optional[int] = None) -> PanelDataset:
    """Read a long-format panel; every unit needs t = 1..T and one assigned intervention."""

    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"Panel CSV not found: {p}")
    try:
        df = pd.read_csv(
            p, dtype={"unit_id": str}, keep_default_na=False, encoding="utf-8-sig", float_precision="round_trip"
        )
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise CsvFormatError(f"Cannot parse {p}: {e}") from None

    missing = [c for c in COLUMNS if c not in df.columns]
    if missing:
        raise CsvFormatError(f"{p} is missing columns: {', '.join(missing)}")
    if df.empty:
        raise CsvFormatError(f"{p} has no data rows")

    t = pd.to_numeric(df["t"], errors="coerce")
    bad_t = t.isna() | (t != np.floor(t)) | (t < 1)
    if bad_t.any():
        raise CsvFormatError("t must be a positive integer", _file_rows(bad_t))
    outcome = pd.to_numeric(df["outcome"], errors="coerce")
    bad_y = outcome.isna() | ~np.isfinite(outcome.fillna(0.0))
    if bad_y.any():
        raise CsvFormatError("outcome must be a finite number", _file_rows(bad_y))
    assigned = pd.to_numeric(df["assigned_intervention"], errors="coerce")
    bad_a = assigned.isna() | (assigned != np.floor(assigned)) | (assigned < 0)
    if k is not None:
        bad_a |= assigned >= k
    if bad_a.any():
        raise CsvFormatError("assigned_intervention must be an integer intervention index", _file_rows(bad_a))
    if (df["unit_id"].str.strip() == "").any():
        raise CsvFormatError("unit_id must be non-empty", _file_rows(df["unit_id"].str.strip() == ""))

    frame = pd.DataFrame(
        {"unit_id": df["unit_id"], "t": t.astype(np.int64), "outcome": outcome.astype(float), "assigned": assigned.astype(np.int64)}
    )

    dup = frame.duplicated(subset=["unit_id", "t"], keep=False)
    if dup.any():
        raise CsvFormatError("duplicate (unit_id, t) pairs", _file_rows(dup))

    per_unit = frame.groupby("unit_id", sort=False)["assigned"].nunique()
    mixed = per_unit[per_unit > 1]
    if not mixed.empty:
        unit = mixed.index[0]
        raise CsvFormatError(
            f"unit {unit} has more than one assigned_intervention", _file_rows(frame["unit_id"] == unit)
        )

    T = int(frame["t"].max())
    if not (1 <= T0 < T):
        raise CsvFormatError(f"Need 1 <= T0 < T; got T0={T0}, T={T}")
    wide = frame.pivot(index="unit_id", columns="t", values="outcome")
    order = frame["unit_id"].drop_duplicates().tolist()
    wide = wide.reindex(index=order, columns=range(1, T + 1))
    holes = np.argwhere(wide.isna().to_numpy())
    if holes.size:
        unit, col = holes[0]
        raise CsvFormatError(
            f"unit {order[unit]} is missing t={col + 1} ({len(holes)} missing cell(s) in total)",
            _file_rows(frame["unit_id"] == order[unit]),
        )

    Y = wide.to_numpy(dtype=float)
    assigned_per_unit = frame.groupby("unit_id", sort=False)["assigned"].first().reindex(order).to_numpy()
    k_eff = k if k is not None else int(assigned_per_unit.max()) + 1
    logger.info("Ingested %d units x %d periods from %s", Y.shape[0], T, p)
    return PanelDataset(
        y_pre=Y[:, :T0], assigned=assigned_per_unit, y_post=Y[:, T0:], k=k_eff, unit_ids=tuple(order)
    )
