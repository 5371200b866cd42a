"""Plain-text artifacts: CSV tables with full float precision and JSON sidecars.

Floats are written with ``%.17g`` so a round trip is exact.  JSON output is
deterministic (fixed key order, no timestamps); non-finite floats are
written as the strings ``"inf"``, ``"-inf"`` and ``"nan"``.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .exceptions import IngestionError
from .library import DataMatrix

__all__ = ["to_jsonable", "write_json", "read_json", "write_csv", "write_data_csv", "read_data_csv",
           "write_field", "read_field"]


def to_jsonable(obj):
    """Recursively convert numpy containers and scalars to JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(to_jsonable(obj), indent=2) + "\n")


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IngestionError(f"malformed JSON in {path}: {exc}") from exc


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_data_csv(path, data: DataMatrix, controls=None, control_names=None) -> None:
    """Columns ``t``, one per state, then one per control input."""
    cols = [data.times[:, None], data.values]
    header = ["t", *data.names]
    if controls is not None:
        c = np.asarray(controls, dtype=float).reshape(data.m, -1)
        cols.append(c)
        header += list(control_names or (["u"] if c.shape[1] == 1 else [f"u{i + 1}" for i in range(c.shape[1])]))
    write_csv(path, header, np.hstack(cols).tolist())


def read_data_csv(path, control_columns=()) -> tuple[DataMatrix, np.ndarray | None]:
    """Read a ``t, states...`` CSV; returns ``(data, controls or None)``.

    Lines starting with ``#`` are ignored.  The time column must be
    uniformly spaced.
    """
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    except OSError as exc:
        raise IngestionError(f"cannot read data file {path}: {exc}") from exc
    if len(rows) < 3:
        raise IngestionError(f"data file {path} has fewer than two samples")
    header = [h.strip() for h in rows[0]]
    try:
        arr = np.array([[float(v) for v in r] for r in rows[1:]])
    except ValueError as exc:
        raise IngestionError(f"non-numeric entry in {path}: {exc}") from exc
    if arr.ndim != 2 or arr.shape[1] != len(header):
        raise IngestionError(f"ragged rows in {path}")
    if header[0].lower() != "t":
        raise IngestionError(f"first column of {path} must be 't', got {header[0]!r}")
    t = arr[:, 0]
    steps = np.diff(t)
    if not np.all(steps > 0) or not np.allclose(steps, steps[0], rtol=1e-6, atol=0):
        raise IngestionError(f"time column of {path} is not uniformly increasing")
    ctrl_idx = [header.index(c) for c in control_columns if c in header]
    missing = [c for c in control_columns if c not in header]
    if missing:
        raise IngestionError(f"{path} lacks control columns {missing}")
    state_idx = [j for j in range(1, len(header)) if j not in ctrl_idx]
    try:
        data = DataMatrix(arr[:, state_idx], float(steps.mean()), tuple(header[j] for j in state_idx), t0=float(t[0]))
    except ValueError as exc:
        raise IngestionError(f"invalid data in {path}: {exc}") from exc
    controls = arr[:, ctrl_idx] if ctrl_idx else None
    return data, controls


def write_field(path, field: DataMatrix, extra: dict | None = None) -> None:
    """Field values as CSV (rows = time) plus a ``.json`` sidecar with grid info."""
    path = Path(path)
    write_csv(path, [f"x{j}" for j in range(field.n)], field.values.tolist())
    meta = {"dt": field.dt, "dx": field.dx, "t0": field.t0, "shape": list(field.values.shape)}
    if extra:
        meta.update(extra)
    write_json(path.with_suffix(".json"), meta)


def read_field(path) -> DataMatrix:
    path = Path(path)
    meta = read_json(path.with_suffix(".json"))
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        values = np.array([[float(v) for v in r] for r in rows])
    except OSError as exc:
        raise IngestionError(f"cannot read field file {path}: {exc}") from exc
    except ValueError as exc:
        raise IngestionError(f"malformed field file {path}: {exc}") from exc
    if list(values.shape) != list(meta.get("shape", values.shape)):
        raise IngestionError(f"field {path} shape {values.shape} disagrees with sidecar {meta.get('shape')}")
    if meta.get("dx") is None:
        raise IngestionError(f"sidecar of {path} lacks dx")
    return DataMatrix(values, float(meta["dt"]), dx=float(meta["dx"]), t0=float(meta.get("t0", 0.0)))
