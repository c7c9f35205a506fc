"""Binary trace dumps with JSON sidecars, plus small JSON/CSV helpers.

A dump ``<stem>.bin`` holds little-endian float64 values; complex arrays are
stored interleaved (I, Q, I, Q, ...). ``<stem>.json`` records the shape,
whether the data is complex, and free-form metadata.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

__all__ = ["read_dump", "write_dump", "write_json", "write_trace_csv"]

_DTYPE = "<f8"


def write_dump(stem, array, meta: dict | None = None) -> tuple[Path, Path]:
    """Write ``array`` to ``<stem>.bin`` and its description to ``<stem>.json``."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    a = np.asarray(array)
    is_complex = np.iscomplexobj(a)
    if is_complex:
        raw = np.empty(a.shape + (2,), _DTYPE)
        raw[..., 0], raw[..., 1] = a.real, a.imag
    else:
        raw = a.astype(_DTYPE)
    bin_path, json_path = stem.with_suffix(".bin"), stem.with_suffix(".json")
    bin_path.write_bytes(np.ascontiguousarray(raw).tobytes())
    side = {"dtype": "float64-le", "complex": bool(is_complex), "shape": list(a.shape), "meta": meta or {}}
    json_path.write_text(json.dumps(side, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return bin_path, json_path


def read_dump(stem) -> tuple[np.ndarray, dict]:
    """Inverse of :func:`write_dump`; returns the array and the sidecar dict."""
    stem = Path(stem)
    side = json.loads(stem.with_suffix(".json").read_text(encoding="utf-8"))
    if side.get("dtype") != "float64-le":
        raise ValueError(f"unsupported dump dtype {side.get('dtype')!r}")
    raw = np.frombuffer(stem.with_suffix(".bin").read_bytes(), dtype=_DTYPE)
    shape = tuple(side["shape"])
    expected = int(np.prod(shape)) * (2 if side["complex"] else 1)
    if raw.size != expected:
        raise ValueError(f"dump holds {raw.size} values, sidecar describes {expected}")
    if side["complex"]:
        raw = raw.reshape(shape + (2,))
        return raw[..., 0] + 1j * raw[..., 1], side
    return raw.reshape(shape).copy(), side


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
    return path


def write_trace_csv(path, columns: dict) -> Path:
    """Write equal-length 1-D columns (name -> values) as CSV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    cols = [np.asarray(columns[n]).ravel() for n in names]
    if len({c.size for c in cols}) > 1:
        raise ValueError("columns must have equal length")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([repr(float(v)) if isinstance(v, np.floating) else int(v) for v in row])
    return path
