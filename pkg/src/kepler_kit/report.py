"""Report emission: versioned JSON and CSV with full-precision floats."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from enum import Enum

import numpy as np

SCHEMA_VERSION = 1


def fmt_float(x: float) -> str:
    return format(float(x), ".17g")


def _plain(obj):
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def dumps(obj, indent: int = 2) -> str:
    """JSON text with every float written to 17 significant digits (non-finite -> null)."""
    return _dump(_plain(obj), 0, indent)


def _dump(obj, level: int, indent: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or obj is True or obj is False or isinstance(obj, (str, int)) and not isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, float):
        return fmt_float(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_dump(v, level + 1, indent)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_dump(v, level + 1, indent) for v in obj) + "]"
        items = [pad + _dump(v, level + 1, indent) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def envelope(command: str, config: dict, result) -> dict:
    return {"schema": SCHEMA_VERSION, "command": command, "config": config, "result": result}


def csv_text(rows: list[dict], columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row.get(c, "")) for c in columns])
    return buf.getvalue()


def _cell(v) -> str:
    v = _plain(v)
    if isinstance(v, float):
        return fmt_float(v) if math.isfinite(v) else "nan"
    return str(v)


def write_text(path: str, text: str) -> str:
    try:
        d = os.path.dirname(path)
        if d:
            os.makedirs(d, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write report {path!r}: {exc.strerror or exc}") from exc
    return path


def emit_report(command: str, config: dict, result, out: str | None, fmt: str = "json",
                rows: list[dict] | None = None, columns=None, stem: str | None = None) -> list[str]:
    """Write ``<out>/<stem>.json`` and/or ``.csv``; returns the written paths.

    The JSON file embeds the full run configuration under ``config``.  With no
    ``out`` nothing is written.
    """
    if out is None:
        return []
    stem = stem or command
    paths = []
    if fmt in ("json", "both"):
        paths.append(write_text(os.path.join(out, f"{stem}.json"), dumps(envelope(command, config, result)) + "\n"))
    if fmt in ("csv", "both") and rows is not None:
        paths.append(write_text(os.path.join(out, f"{stem}.csv"), csv_text(rows, columns)))
    return paths
