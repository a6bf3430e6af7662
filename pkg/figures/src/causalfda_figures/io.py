"""Readers for the simulation outputs: the flat results CSV and curve dumps.

These scripts are read-only consumers of the documented interfaces; nothing
here recomputes statistics beyond grouping and averaging for display.
"""

from __future__ import annotations

import json
from pathlib import Path

import pandas as pd


class SchemaError(ValueError):
    """Input file does not match the documented schema."""


RESULT_COLUMNS = (
    "scenario_id",
    "alpha_pi",
    "alpha_mu",
    "n",
    "seed",
    "estimator",
    "mse",
    "delta",
    "simul_covered",
    "q",
)

_NUMERIC = ("alpha_pi", "alpha_mu", "n", "seed", "mse", "delta", "simul_covered", "q")

DUMP_KEYS = ("scenario_id", "seed", "grid", "beta_true", "estimates", "band")


def load_results(path: str | Path) -> pd.DataFrame:
    """Load and validate a results CSV; numeric columns are coerced or rejected."""
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"results file {path} does not exist")
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = [c for c in RESULT_COLUMNS if c not in frame.columns]
    if missing:
        raise SchemaError(f"{path}: missing required columns {missing}")
    if frame.empty:
        raise SchemaError(f"{path}: no result rows")
    out = frame.copy()
    for col in _NUMERIC:
        coerced = pd.to_numeric(out[col].replace("", None), errors="coerce")
        bad = coerced.isna() & (out[col] != "")
        if bad.any():
            row = int(bad.idxmax()) + 2  # 1-based plus header
            raise SchemaError(f"{path}: column {col!r} has a non-numeric value at line {row}")
        out[col] = coerced
    return out


def load_dump(path: str | Path) -> dict:
    """Load and validate a per-replicate curve dump."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read curve dump {path}: {exc}") from None
    missing = [k for k in DUMP_KEYS if k not in payload]
    if missing:
        raise SchemaError(f"{path}: dump is missing keys {missing}")
    m = len(payload["grid"])
    for name, series in payload["estimates"].items():
        if len(series) != m:
            raise SchemaError(f"{path}: estimate {name!r} has {len(series)} values, grid has {m}")
    if len(payload["beta_true"]) != m:
        raise SchemaError(f"{path}: beta_true length does not match the grid")
    band = payload["band"]
    if band is not None:
        for key in ("lower", "upper", "level", "q"):
            if key not in band:
                raise SchemaError(f"{path}: band is missing {key!r}")
        if len(band["lower"]) != m or len(band["upper"]) != m:
            raise SchemaError(f"{path}: band curves do not match the grid")
    return payload
