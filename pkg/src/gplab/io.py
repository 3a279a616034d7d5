"""Binary checkpoints, CSV tables and JSON run reports."""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .lattice import Field, Grid

__all__ = [
    "REPORT_SCHEMA",
    "write_field",
    "read_field",
    "write_state",
    "read_state",
    "write_csv",
    "read_csv",
    "write_report",
    "read_report",
    "format_number",
]

REPORT_SCHEMA = "gplab-report-1"
_GPF = b"GPF1"
_MBF = b"MBF1"


def write_field(phi: Field, path: str | Path) -> None:
    """``GPF1``, ``dim`` and axis sizes (uint32), spacing, then ``(re, im)`` pairs.

    All numbers are little endian; values are stored row major.
    """
    g = phi.grid
    with open(path, "wb") as fh:
        fh.write(_GPF)
        fh.write(struct.pack("<I", g.dim))
        fh.write(struct.pack(f"<{g.dim}I", *g.points))
        fh.write(struct.pack("<d", g.h))
        fh.write(np.ascontiguousarray(phi.values, dtype="<c16").tobytes())


def read_field(path: str | Path) -> Field:
    data = Path(path).read_bytes()
    if data[:4] != _GPF:
        raise ValueError(f"{path}: not a GPF1 field file")
    (dim,) = struct.unpack_from("<I", data, 4)
    if dim not in (1, 2, 3):
        raise ValueError(f"{path}: bad dimension {dim}")
    points = struct.unpack_from(f"<{dim}I", data, 8)
    off = 8 + 4 * dim
    (h,) = struct.unpack_from("<d", data, off)
    off += 8
    grid = Grid(dim, points, h)
    body = np.frombuffer(data, dtype="<c16", offset=off)
    if body.size != grid.size:
        raise ValueError(f"{path}: expected {grid.size} values, found {body.size}")
    return Field(body.astype(complex).reshape(grid.shape), grid)


def write_state(psi: np.ndarray, M: int, N: int, path: str | Path) -> None:
    """``MBF1``, ``(M, N)`` as uint32 and the complex coefficients."""
    psi = np.asarray(psi, dtype="<c16")
    with open(path, "wb") as fh:
        fh.write(_MBF)
        fh.write(struct.pack("<II", M, N))
        fh.write(struct.pack("<Q", psi.size))
        fh.write(psi.tobytes())


def read_state(path: str | Path) -> tuple[np.ndarray, int, int]:
    data = Path(path).read_bytes()
    if data[:4] != _MBF:
        raise ValueError(f"{path}: not an MBF1 state file")
    M, N = struct.unpack_from("<II", data, 4)
    (n,) = struct.unpack_from("<Q", data, 12)
    psi = np.frombuffer(data, dtype="<c16", offset=20)
    if psi.size != n:
        raise ValueError(f"{path}: expected {n} coefficients, found {psi.size}")
    return psi.astype(complex), M, N


def format_number(x) -> str:
    """Round-trip exact text for floats; integers and strings pass through."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: str | Path, columns: dict) -> None:
    """Write equal-length columns with a header row."""
    names = list(columns)
    n = {len(columns[k]) for k in names}
    if len(n) > 1:
        raise ValueError("CSV columns differ in length")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*(columns[k] for k in names)):
            w.writerow([format_number(x) for x in row])


def read_csv(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    names, body = rows[0], rows[1:]
    out = {}
    for j, k in enumerate(names):
        col = [r[j] for r in body]
        try:
            out[k] = np.array([float(x) for x in col])
        except ValueError:
            out[k] = np.array(col)
    return out


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def write_report(report: dict, path: str | Path) -> None:
    body = dict(report)
    body.setdefault("schema", REPORT_SCHEMA)
    Path(path).write_text(json.dumps(_jsonable(body), indent=2, sort_keys=False) + "\n")


def read_report(path: str | Path) -> dict:
    data = json.loads(Path(path).read_text())
    if data.get("schema") != REPORT_SCHEMA:
        raise ValueError(f"{path}: unknown report schema {data.get('schema')!r}")
    return data
