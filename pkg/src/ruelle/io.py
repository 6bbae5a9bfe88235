"""Deterministic writers for CSV, JSON and binary matrix dumps."""
from __future__ import annotations

import csv
import json
import math
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

KOOP_MAGIC = b"KOOP"
KOOP_HEADER = 16


def fmt(value) -> str:
    """Locale-free text for one CSV cell; floats use 17 significant digits."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return ""
    value = float(value)
    return format(value + 0.0 if value == 0 else value, ".17g")


def write_csv(path: Path | str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _plain(obj):
    """Convert numpy scalars/arrays and non-finite floats to JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        return obj if math.isfinite(obj) else None
    if isinstance(obj, (complex, np.complexfloating)):
        return [_plain(obj.real), _plain(obj.imag)]
    return obj


def dumps(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_json(path: Path | str, obj) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8")


def write_matrix(path: Path | str, a: np.ndarray) -> None:
    """Square complex matrix as ``KOOP`` + u32 dim + u32 reserved, padded to 16 bytes,
    then row-major little-endian float64 ``(re, im)`` pairs."""
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    header = KOOP_MAGIC + struct.pack("<II", a.shape[0], 0)
    header = header.ljust(KOOP_HEADER, b"\0")
    body = np.ascontiguousarray(a).astype("<c16").tobytes()
    Path(path).write_bytes(header + body)


def read_matrix(path: Path | str) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != KOOP_MAGIC:
        raise ValueError("not a KOOP matrix dump")
    dim, _ = struct.unpack("<II", raw[4:12])
    body = np.frombuffer(raw[KOOP_HEADER:], dtype="<c16")
    if body.size != dim * dim:
        raise ValueError(f"payload holds {body.size} entries, header says {dim}x{dim}")
    return body.reshape(dim, dim).astype(complex)
