"""
Writes experiment results: the per-replication CSV and the JSON summary.
Files are written to a temporary sibling and renamed, so a failed write
never leaves a partial file behind.
"""

import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd

SCHEMA_VERSION = 1
FLOAT_FORMAT = "%.17g"

SUMMARY_FIELDS = [
    "n", "count", "mean", "var", "var_ci", "target", "target_provenance",
    "ks_stat", "ks_p", "ks_std_p", "ks_ok", "mse", "corr", "reduced_var", "gap",
    "within_tolerance", "degenerate",
]


class ReportError(OSError):
    """Writing a result file failed."""


def _plain(value):
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return None if math.isnan(value) else value
    return value


def _atomic_write(path, write):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", newline="") as handle:
                write(handle)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as e:
        raise ReportError(f"could not write {path}: {e}") from e
    return path


def summary_records(result):
    """Summary rows as JSON-ready dicts with var_ci as a [low, high] pair."""
    records = []
    for row in result.summary.to_dict(orient="records"):
        row = dict(row)
        row["var_ci"] = [_plain(row.pop("var_ci_low", None)), _plain(row.pop("var_ci_high", None))]
        records.append({k: _plain(row[k]) for k in SUMMARY_FIELDS if k in row})
    return records


def summary_document(result):
    document = {
        "schema_version": SCHEMA_VERSION,
        "config": {k: _plain(v) for k, v in result.config.to_dict().items() if k not in ("output", "fmt")},
        "passed": bool(result.passed),
        "summary": summary_records(result),
    }
    if result.constants is not None:
        document["constants"] = [
            {k: _plain(v) for k, v in row.items()} for row in result.constants.to_dict(orient="records")
        ]
    return document


def write_csv(result, path):
    """Per-replication values: part,H,r,f,t,n,rep,value."""
    frame = result.values_frame()
    if frame.empty:
        raise ValueError("no replications to write")
    return _atomic_write(path, lambda handle: frame.to_csv(handle, index=False, float_format=FLOAT_FORMAT))


def write_json(result, path):
    """Summary document with schema_version; keys sorted for stable bytes."""
    document = summary_document(result)
    if not document["summary"] and "constants" not in document:
        raise ValueError("no replications to summarize")

    def dump(handle):
        json.dump(document, handle, indent=2, sort_keys=True, allow_nan=False)
        handle.write("\n")

    return _atomic_write(path, dump)


def write_constants(result, path):
    return _atomic_write(
        path, lambda handle: result.constants.to_csv(handle, index=False, float_format=FLOAT_FORMAT)
    )


def report(result, out_dir, fmt="csv"):
    """
    Persist a result under out_dir.

    csv writes <part>_values.csv and <part>_summary.json; json writes the
    summary only. A constants result writes constants.csv (csv) or the
    document (json).

    Returns:
        list of written paths
    """
    out_dir = Path(out_dir)
    part = result.config.part
    if part == "constants":
        if fmt == "csv":
            return [write_constants(result, out_dir / "constants.csv")]
        return [write_json(result, out_dir / "constants.json")]
    if result.replications.empty:
        raise ValueError("no replications to report")
    written = []
    if fmt == "csv":
        written.append(write_csv(result, out_dir / f"{part}_values.csv"))
    written.append(write_json(result, out_dir / f"{part}_summary.json"))
    return written


def load_summary(path):
    with open(path) as handle:
        return json.load(handle)


def load_values(path):
    return pd.read_csv(path, float_precision="round_trip")
