"""On-disk formats: CSV time series, JSON manifests, binary field snapshots, PGM images.

Snapshot layout (little-endian)::

    magic   4 bytes   b"KSF1"
    dim     uint32
    extents 3×uint32  (unused axes 1)
    spacing 3×float64 (unused axes 0)
    t       float64
    nfields uint32
    names   nfields × 8 bytes, ASCII, NUL-padded
    data    nfields × prod(extents) float64, C order
"""

from __future__ import annotations

import csv
import json
import math
import struct
from pathlib import Path
from typing import Any, Sequence

import numpy as np

MAGIC = b"KSF1"
_HEAD = struct.Struct("<4sI3I3ddI")


def format_float(x: float) -> str:
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def write_csv(path: str | Path, columns: Sequence[str], rows: Sequence[Sequence[float]]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\r\n")
        wr.writerow(columns)
        for row in rows:
            wr.writerow([format_float(float(x)) for x in row])
    return path


def read_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        data = [[float(c) for c in row] for row in rd]
    return header, np.array(data, dtype=float).reshape(len(data), len(header))


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else format_float(x)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_json(path: str | Path, data: dict[str, Any]) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=False) + "\n")
    return path


def write_snapshot(path: str | Path, t: float, spacing: Sequence[float], fields: dict[str, np.ndarray]) -> Path:
    arrays = list(fields.values())
    shape = arrays[0].shape
    if any(a.shape != shape for a in arrays):
        raise ValueError("all snapshot fields must share one shape")
    ext = list(shape) + [1] * (3 - len(shape))
    sp = list(spacing) + [0.0] * (3 - len(spacing))
    with open(path, "wb") as fh:
        fh.write(_HEAD.pack(MAGIC, len(shape), *ext, *sp, float(t), len(arrays)))
        for name in fields:
            fh.write(name.encode("ascii")[:8].ljust(8, b"\0"))
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return Path(path)


def read_snapshot(path: str | Path) -> tuple[float, tuple[float, ...], dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    magic, dim, e0, e1, e2, s0, s1, s2, t, nf = _HEAD.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a field snapshot")
    shape = (e0, e1, e2)[:dim]
    off = _HEAD.size
    names = [raw[off + 8 * i : off + 8 * (i + 1)].rstrip(b"\0").decode("ascii") for i in range(nf)]
    off += 8 * nf
    size = math.prod(shape)
    out = {}
    for name in names:
        out[name] = np.frombuffer(raw, dtype="<f8", count=size, offset=off).reshape(shape).copy()
        off += 8 * size
    return t, (s0, s1, s2)[:dim], out


def write_pgm(path: str | Path, field: np.ndarray) -> Path:
    """8-bit binary PGM of a 2D field (mid-plane slice for 3D), min-max scaled."""
    f = np.asarray(field, dtype=float)
    while f.ndim > 2:
        f = f[f.shape[0] // 2]
    if f.ndim == 1:
        f = f[None, :]
    lo, hi = f.min(), f.max()
    img = np.zeros(f.shape, dtype=np.uint8) if hi == lo else np.round(255 * (f - lo) / (hi - lo)).astype(np.uint8)
    # rows top to bottom = decreasing second coordinate
    img = np.flipud(img.T)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
    return Path(path)
