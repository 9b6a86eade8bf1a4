"""Artifact writers: CSV tables, JSON documents, and binary PGM images."""

from __future__ import annotations

import csv
import json
import os

import numpy as np

__all__ = ["sanitize", "write_csv", "write_json", "write_pgm"]


def sanitize(obj):
    """Convert numpy scalars, arrays, and complex values for JSON.

    Complex numbers become [real, imag] pairs; arrays become nested
    lists; numpy scalars become their Python equivalents.
    """
    if isinstance(obj, dict):
        return {str(k): sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [sanitize(v) for v in obj.tolist()]
    if isinstance(obj, (complex, np.complexfloating)):
        z = complex(obj)
        return [z.real, z.imag]
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _prepare(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    return path


def write_csv(path, header, rows) -> str:
    """Write a CSV table with the given header and row iterable."""
    _prepare(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(list(row))
    return path


def write_json(path, obj) -> str:
    """Write a JSON document after sanitizing numpy and complex values."""
    _prepare(path)
    with open(path, "w") as fh:
        json.dump(sanitize(obj), fh, indent=2)
        fh.write("\n")
    return path


def write_pgm(path, values: np.ndarray) -> str:
    """Write a binary 8-bit PGM (P5) image of a nonnegative field.

    Values are scaled linearly so the maximum maps to gray 255. Rows
    are written top-down, with the last row of `values` (largest y)
    first, matching image conventions for a raster indexed [iy, ix].
    """
    _prepare(path)
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 2:
        raise ValueError("PGM writer expects a 2-D array")
    if not np.all(np.isfinite(arr)):
        raise ValueError("PGM writer expects finite values")
    peak = arr.max()
    if peak <= 0:
        gray = np.zeros_like(arr, dtype=np.uint8)
    else:
        gray = np.clip(np.rint(255.0 * arr / peak), 0, 255).astype(np.uint8)
    ny, nx = gray.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{nx} {ny}\n255\n".encode("ascii"))
        fh.write(gray[::-1].tobytes())
    return path
