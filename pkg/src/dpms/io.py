"""CSV ingestion, the bundled fixture, and artifact serialization."""

from __future__ import annotations

import csv
import json
import logging
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DataError
from .linmodel import RegressionData

__all__ = [
    "ingest_csv",
    "read_columns",
    "hsb2_path",
    "load_hsb2",
    "write_json_record",
    "write_csv",
    "posterior_csv_rows",
]

log = logging.getLogger(__name__)


def read_columns(path) -> dict[str, list[str]]:
    """Read a headered CSV into string columns."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"input file has no header row: {path}")
        cols: dict[str, list[str]] = {name: [] for name in reader.fieldnames}
        for row in reader:
            for name in reader.fieldnames:
                cols[name].append(row[name])
    return cols


def _numeric_column(cols: dict[str, list[str]], name: str, path) -> np.ndarray:
    if name not in cols:
        raise DataError(f"column {name!r} not present in {path} "
                        f"(available: {sorted(cols)})")
    out = np.empty(len(cols[name]))
    for i, cell in enumerate(cols[name]):
        try:
            out[i] = float(cell)
        except ValueError:
            raise DataError(
                f"non-numeric cell in {path}: row {i + 1}, column {name!r} "
                f"(value {cell!r})"
            ) from None
    return out


def ingest_csv(
    path,
    response: str,
    x0_columns: tuple[str, ...] = (),
    x_columns: tuple[str, ...] = (),
    *,
    add_intercept: bool = True,
    warn_unit_box: bool = False,
) -> RegressionData:
    """Build RegressionData from a headered CSV.

    Rows are numbered from 1 (excluding the header) in error messages.
    ``warn_unit_box`` flags values outside (-0.5, 0.5), which matter only
    when the Gram release is the target (its sensitivity bounds assume
    bounded entries).
    """
    cols = read_columns(path)
    y = _numeric_column(cols, response, path)
    x0_parts = [_numeric_column(cols, c, path) for c in x0_columns]
    x_parts = [_numeric_column(cols, c, path) for c in x_columns]
    if not x_parts:
        raise DataError("at least one tested predictor column is required")
    for name, col in zip(x_columns, x_parts):
        if np.ptp(col) == 0.0:
            raise DataError(f"tested column {name!r} is constant")
    if add_intercept:
        x0_parts = [np.ones_like(y)] + x0_parts
    if not x0_parts:
        raise DataError("need at least one common predictor (or an intercept)")
    x0 = np.column_stack(x0_parts)
    x = np.column_stack(x_parts)
    if warn_unit_box:
        stacked = np.column_stack([x, y])
        outside = int(np.count_nonzero((stacked <= -0.5) | (stacked >= 0.5)))
        if outside:
            log.warning(
                "%d cells lie outside (-0.5, 0.5); rescale with declared bounds "
                "before the Gram release or its sensitivity bounds will not hold",
                outside,
            )
    return RegressionData(y=y, x0=x0, x=x)


def hsb2_path() -> Path:
    """Path of the bundled 200-student high-school-scores fixture."""
    return Path(resources.files("dpms").joinpath("data/hsb2.csv"))


def load_hsb2() -> dict[str, np.ndarray]:
    """The bundled fixture as numeric columns."""
    cols = read_columns(hsb2_path())
    return {name: _numeric_column(cols, name, "hsb2.csv") for name in cols}


def _jsonable(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def write_json_record(path, record: dict) -> None:
    """Write one artifact record as deterministic, sorted-key JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        json.dump(_jsonable(record), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(path, header: list[str], rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if v is None else v for v in row])


def posterior_csv_rows(posterior) -> list[list]:
    """One row per model: bitmask string, log marginal, posterior mass."""
    rows = []
    for gamma in range(posterior.posterior.shape[0]):
        mask = format(gamma, f"0{posterior.p}b")[::-1]  # bit j = predictor j
        rows.append([mask, repr(float(posterior.log_marginals[gamma])),
                     repr(float(posterior.posterior[gamma]))])
    return rows
