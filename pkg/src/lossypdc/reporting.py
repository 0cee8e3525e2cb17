"""Serialization of run artifacts: delimited tables, complex matrices, hashes.

Real-valued tables go to CSV with ``# key: value`` comment headers naming
units, basis tags and the configuration hash; complex matrices go to JSON as
``{"re": [...], "im": [...]}``.  All numeric files are written atomically,
use LF line endings and contain no timestamps, so identical configurations
produce byte-identical outputs.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile

import numpy as np


def config_hash(resolved: dict) -> str:
    """Stable short hash of a resolved configuration mapping."""
    canon = json.dumps(resolved, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def atomic_write_text(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: str, columns: dict, meta: dict) -> None:
    """Write named columns of equal length with commented metadata header."""
    lines = [f"# {k}: {v}" for k, v in meta.items()]
    lines.append(",".join(columns.keys()))
    arrays = [np.atleast_1d(np.asarray(c)) for c in columns.values()]
    length = arrays[0].size
    if any(a.size != length for a in arrays):
        raise ValueError("CSV columns must have equal length")
    for i in range(length):
        lines.append(",".join(_fmt(a[i]) for a in arrays))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_matrix_csv(path: str, matrix: np.ndarray, meta: dict) -> None:
    """Write a real matrix as rows of comma-separated values."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    lines = [f"# {k}: {v}" for k, v in meta.items()]
    lines.append(f"# shape: {matrix.shape[0]}x{matrix.shape[1]}")
    for row in matrix:
        lines.append(",".join(_fmt(x) for x in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_complex_json(path: str, matrix: np.ndarray, meta: dict) -> None:
    """Write a complex matrix as {re, im} arrays plus metadata."""
    matrix = np.asarray(matrix, dtype=complex)
    payload = dict(meta)
    payload["re"] = [[float(v) for v in row] for row in matrix.real]
    payload["im"] = [[float(v) for v in row] for row in matrix.imag]
    atomic_write_text(path, json.dumps(payload, sort_keys=True, indent=1) + "\n")


def write_json(path: str, payload: dict) -> None:
    atomic_write_text(path, json.dumps(payload, sort_keys=True, indent=1, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)!r}")
