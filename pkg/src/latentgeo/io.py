"""Reading and writing models, tables and reports.

Every float is written as ``%.16e`` (17 significant digits) so that reading
a file back reproduces the values bit for bit.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import InputError
from .gp import LatentModel
from .kernel import KernelParams

FLOAT_FMT = "%.16e"


def format_float(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return FLOAT_FMT % x


def _is_number_list(obj) -> bool:
    return isinstance(obj, list) and all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj)


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with full-precision floats; numeric lists stay on one line."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, np.generic):
        obj = obj.item()
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (list, tuple)):
        obj = list(obj)
        if not obj:
            return "[]"
        if _is_number_list(obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        inner = (",\n" + pad).join(dumps(v, indent, _level + 1) for v in obj)
        return "[\n" + pad + inner + "\n" + end + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [json.dumps(str(k)) + ": " + dumps(v, indent, _level + 1) for k, v in obj.items()]
        return "{\n" + pad + (",\n" + pad).join(items) + "\n" + end + "}"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj) + "\n")


def read_json(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    if not text.strip():
        raise InputError(f"{path} is empty")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc


# ---- models ---------------------------------------------------------------

def model_to_dict(model: LatentModel) -> dict:
    return {
        "q": model.q,
        "params": model.params.to_dict(),
        "X": model.X.tolist(),
        "Y_mean": model.Y_mean.tolist(),
        "Y": model.Y.tolist(),
    }


def _float_array(value, name: str, ndim: int) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InputError(f"model field {name!r} is not a numeric array") from exc
    if arr.ndim != ndim:
        raise InputError(f"model field {name!r} must be {ndim}-dimensional")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"model field {name!r} contains non-finite values")
    return arr


def model_from_dict(doc: dict) -> LatentModel:
    if not isinstance(doc, dict):
        raise InputError("model document must be a JSON object")
    missing = [k for k in ("q", "params", "X", "Y_mean", "Y") if k not in doc]
    if missing:
        raise InputError(f"model document lacks field(s): {', '.join(missing)}")
    X = _float_array(doc["X"], "X", 2)
    Y = _float_array(doc["Y"], "Y", 2)
    Y_mean = _float_array(doc["Y_mean"], "Y_mean", 1)
    q = doc["q"]
    if not isinstance(q, int) or isinstance(q, bool) or X.shape[1] != q:
        raise InputError(f"model field 'q' ({q!r}) disagrees with X of shape {X.shape}")
    N, p = Y.shape
    if N < 2 or not 1 <= q < p:
        raise InputError(f"model needs N >= 2 and 1 <= q < p (N={N}, q={q}, p={p})")
    try:
        params = KernelParams(**{k: float(doc["params"][k]) for k in ("alpha", "omega", "beta")})
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"bad kernel parameters: {exc}") from exc
    return LatentModel(X, Y, params, Y_mean)


def save_model(path, model: LatentModel) -> None:
    write_json(path, model_to_dict(model))


def load_model(path) -> LatentModel:
    return model_from_dict(read_json(path))


# ---- CSV ------------------------------------------------------------------

def _parse_row(row, lineno: int, path) -> list[float]:
    try:
        vals = [float(v) for v in row]
    except ValueError as exc:
        raise InputError(f"{path}:{lineno}: non-numeric value ({exc})") from exc
    if not all(math.isfinite(v) for v in vals):
        raise InputError(f"{path}:{lineno}: non-finite value")
    return vals


def read_matrix_csv(path) -> np.ndarray:
    """Numeric comma-separated table; a non-numeric first row is a header."""
    try:
        with open(path, newline="") as fh:
            rows = [(i, r) for i, r in enumerate(csv.reader(fh), start=1) if any(c.strip() for c in r)]
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    if not rows:
        raise InputError(f"{path} is empty")
    first_line, first = rows[0]
    try:
        [float(v) for v in first]
    except ValueError:
        rows = rows[1:]  # header
    if not rows:
        raise InputError(f"{path} has a header but no data")
    width = len(rows[0][1])
    data = []
    for lineno, row in rows:
        if len(row) != width:
            raise InputError(f"{path}:{lineno}: expected {width} columns, found {len(row)}")
        data.append(_parse_row(row, lineno, path))
    return np.array(data, dtype=float)


def write_csv(path, header, rows) -> None:
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    lines = [",".join(header)]
    lines += [",".join(format_float(v) for v in r) for r in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def write_curve_csv(path, curve) -> None:
    q = curve.nodes.shape[1]
    write_csv(path, ["t"] + [f"x{i + 1}" for i in range(q)],
              np.column_stack([curve.params, curve.nodes]))


def write_points_csv(path, points) -> None:
    points = np.atleast_2d(points)
    write_csv(path, [f"x{i + 1}" for i in range(points.shape[1])], points)


def write_observations_csv(path, Y) -> None:
    Y = np.atleast_2d(Y)
    write_csv(path, [f"y{j + 1}" for j in range(Y.shape[1])], Y)
