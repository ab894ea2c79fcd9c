# ===================================================================================================
# CSV / JSON - READ & WRITE
# ===================================================================================================

import io
import json
import logging
import os
import re
from typing import Optional, Union

import numpy as np
import pandas as pd
from flatten_json import flatten, unflatten_list
from pydantic import BaseModel

from rskit import models
from rskit.errors import DatasetFormatError
from rskit.modules.misc import mkdir

logger = logging.getLogger(__name__)

SEPARATOR = "."
FEATURE_COLUMN = re.compile(r"^u(\d+)$")

# ===================================================================================================
# PARSING


def _read_frame(path: str) -> pd.DataFrame:
    if not os.path.exists(path):
        raise DatasetFormatError(f"{path}: file not found")
    try:
        return pd.read_csv(path, float_precision="round_trip", skipinitialspace=True)
    except pd.errors.EmptyDataError as e:
        raise DatasetFormatError(f"{path}: empty file") from e
    except pd.errors.ParserError as e:
        raise DatasetFormatError(f"{path}: ragged rows: {e}") from e


def _numeric(df: pd.DataFrame, path: str) -> np.ndarray:
    """All cells as float64; the first bad cell is reported by data row and column."""
    for column in df.columns:
        values = df[column]
        if values.dtype == object:
            coerced = pd.to_numeric(values, errors="coerce")
            bad = coerced.isna() & values.notna()
            if bad.any():
                row = int(np.flatnonzero(bad.to_numpy())[0])
                raise DatasetFormatError(
                    f"{path}: row {row + 1}, column {column!r}: non-numeric value {values.iloc[row]!r}"
                )
        missing = values.isna().to_numpy()
        if missing.any():
            row = int(np.flatnonzero(missing)[0])
            raise DatasetFormatError(f"{path}: row {row + 1}, column {column!r}: missing value")

    out = df.to_numpy(dtype=float)
    if not np.all(np.isfinite(out)):
        row = int(np.flatnonzero(~np.all(np.isfinite(out), axis=1))[0])
        raise DatasetFormatError(f"{path}: row {row + 1}: non-finite value")
    return out


# ===================================================================================================
# DATASETS


def read_dataset(path: str) -> models.DATASET:
    """Parse a `u1,...,u{m},y` file to full double precision."""
    df = _read_frame(path)
    columns = [str(c) for c in df.columns]

    if "y" not in columns:
        raise DatasetFormatError(f"{path}: missing column 'y'")
    features = [c for c in columns if c != "y"]
    expected = [f"u{i}" for i in range(1, len(features) + 1)]
    if features != expected or columns[-1] != "y":
        unexpected = next((c for c, e in zip(features, expected) if c != e), columns[-1])
        raise DatasetFormatError(
            f"{path}: header must be {','.join(expected + ['y'])}, found column {unexpected!r}"
        )
    if not features:
        raise DatasetFormatError(f"{path}: no feature columns u1..u{{m}}")
    if df.shape[0] == 0:
        raise DatasetFormatError(f"{path}: no data rows")

    values = _numeric(df, path)
    data = models.DATASET(values[:, :-1], values[:, -1])
    logger.debug(f"read dataset {path}: N={data.n}, m_u={data.m_u}")
    return data


def write_dataset(data: models.DATASET, path: str):
    columns = [f"u{i}" for i in range(1, data.m_u + 1)] + ["y"]
    df = pd.DataFrame(data.joint, columns=columns)
    mkdir(path)
    df.to_csv(path, index=False, lineterminator="\n")


# ===================================================================================================
# DISTRIBUTIONS


def read_distribution(path: str) -> models.DISCRETE_DISTRIBUTION:
    """Coordinate columns plus an optional `weight` column (uniform when absent)."""
    df = _read_frame(path)
    if df.shape[0] == 0:
        raise DatasetFormatError(f"{path}: no data rows")
    values = _numeric(df, path)
    columns = [str(c) for c in df.columns]

    if "weight" in columns:
        k = columns.index("weight")
        weights = values[:, k]
        support = np.delete(values, k, axis=1)
        if support.shape[1] == 0:
            raise DatasetFormatError(f"{path}: no coordinate columns")
        return models.DISCRETE_DISTRIBUTION(support, weights)
    return models.DISCRETE_DISTRIBUTION.uniform(values)


def write_distribution(dist: models.DISCRETE_DISTRIBUTION, path: str):
    columns = [f"xi{i}" for i in range(1, dist.dim + 1)]
    df = pd.DataFrame(dist.support, columns=columns)
    df["weight"] = dist.weights
    mkdir(path)
    df.to_csv(path, index=False, lineterminator="\n")


# ===================================================================================================
# RESULTS


def render_results(result: BaseModel, fmt: str = "json") -> str:
    """Text of a result in the emitted file format; always ends with a newline."""
    if fmt == "json":
        return result.model_dump_json(indent=2) + "\n"
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt}")

    if isinstance(result, models.SWEEP_RESULT):
        df = pd.DataFrame([row.model_dump() for row in result.rows], columns=models.SWEEP_COLUMNS)
    else:
        df = pd.DataFrame([flatten(result.model_dump(), SEPARATOR)])
    buffer = io.StringIO()
    df.to_csv(buffer, index=False, lineterminator="\n")
    return buffer.getvalue()


def write_results(result: BaseModel, path: Optional[str], fmt: str = "json"):
    text = render_results(result, fmt)
    if path is None:
        print(text, end="")
        return
    mkdir(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    logger.info(f"results written to {path} ({fmt})")


def read_results(path: str, fmt: Optional[str] = None) -> Union[models.SWEEP_RESULT, dict]:
    """Re-parse an emitted file: sweeps come back as SWEEP_RESULT, other results as dicts."""
    fmt = fmt or ("csv" if path.lower().endswith(".csv") else "json")

    if fmt == "json":
        with open(path, encoding="utf-8") as f:
            try:
                payload = json.load(f)
            except json.JSONDecodeError as e:
                raise DatasetFormatError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from e
        if isinstance(payload, dict) and {"rows", "diagnostics", "metadata"} <= set(payload):
            return models.SWEEP_RESULT.model_validate(payload)
        return payload

    df = _read_frame(path)
    if [str(c) for c in df.columns] == models.SWEEP_COLUMNS:
        rows = [models.SWEEP_ROW(**record) for record in df.to_dict(orient="records")]
        return models.SWEEP_RESULT(rows=rows)
    if df.shape[0] != 1:
        raise DatasetFormatError(f"{path}: expected a single result row, found {df.shape[0]}")
    record = {k: (None if isinstance(v, float) and np.isnan(v) else v) for k, v in df.iloc[0].to_dict().items()}
    return unflatten_list(record, SEPARATOR)
