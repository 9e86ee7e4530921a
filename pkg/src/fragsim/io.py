"""CSV and JSON writers with reproducible formatting.

CSV cells are written with 17 significant digits so that values round-trip
exactly; JSON uses sorted keys and encodes non-finite floats as the strings
``"+inf"``, ``"-inf"`` and ``"nan"`` to stay valid JSON.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def read_csv(path):
    """``(header, float array)`` of a numeric CSV written by ``write_csv``."""
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def jsonable(obj):
    """Convert numpy scalars/arrays and non-finite floats for ``json.dump``."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "+inf" if x > 0 else "-inf"
        return x
    return obj


def decode_float(v) -> float:
    """Inverse of the non-finite encoding used by ``jsonable``."""
    if isinstance(v, str):
        return {"+inf": math.inf, "-inf": -math.inf, "nan": math.nan}[v]
    return float(v)


def write_json(path, obj) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        json.dump(jsonable(obj), fh, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False)
        fh.write("\n")
    return path


def read_json(path):
    with Path(path).open(encoding="utf-8") as fh:
        return json.load(fh)
