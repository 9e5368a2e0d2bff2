"""Matrix exchange formats: CSV (row-major, full symmetric storage) and JSON
nested arrays. Round trips are exact to 17 significant digits."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import linalg
from .errors import DimensionError, ParseError

_FORMATS = ("csv", "json")


def _infer_format(path, fmt):
    if fmt is not None:
        if fmt not in _FORMATS:
            raise ParseError(f"unsupported matrix format {fmt!r}; use one of {_FORMATS}")
        return fmt
    suffix = Path(path).suffix.lower().lstrip(".")
    return suffix if suffix in _FORMATS else "csv"


def write_matrix(M, path, fmt=None):
    """Write a matrix; format from ``fmt`` or the file suffix (default csv)."""
    M = np.asarray(M, dtype=float)
    fmt = _infer_format(path, fmt)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        rows = "\n".join(",".join(f"{x:.17g}" for x in row) for row in M)
        path.write_text(rows + "\n")
    else:
        path.write_text(json.dumps(M.tolist()) + "\n")
    return path


def _parse_rows(path):
    text = Path(path).read_text()
    rows = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rows.append([float(x) for x in line.split(",")])
        except ValueError as exc:
            raise ParseError(f"{path}:{line_no}: {exc}") from exc
    if not rows:
        raise ParseError(f"{path}: empty matrix file")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise DimensionError(f"{path}: ragged rows")
    return np.asarray(rows, dtype=float)


def read_matrix(path, fmt=None, symmetric=True):
    """Read a matrix and, by default, validate squareness and symmetry."""
    fmt = _infer_format(path, fmt)
    if fmt == "csv":
        M = _parse_rows(path)
    else:
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from exc
        M = np.asarray(data, dtype=float)
        if M.ndim != 2:
            raise DimensionError(f"{path}: expected a nested array matrix")
    if M.shape[0] != M.shape[1]:
        raise DimensionError(f"{path}: matrix is {M.shape[0]} x {M.shape[1]}, not square")
    if symmetric:
        return linalg.check_symmetric(M, name=str(path))
    return M


def write_vector(v, path):
    v = np.asarray(v, dtype=float)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(f"{x:.17g}" for x in v) + "\n")
    return path


def read_vector(path):
    text = Path(path).read_text()
    try:
        return np.asarray([float(x) for x in text.split()], dtype=float)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc
