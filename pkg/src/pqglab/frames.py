"""Binary frame files and the scalar-diagnostics CSV.

Frame layout (all little-endian)::

    4s   magic b"PQGF"
    u32  format version
    u32  nx, ny, nz
    f64  Lx, Ly, H, t
    u32  number of fields
    per field: u16 name length, utf-8 name, u32 number of levels
    per field, in header order: float64 values, shape (nlev, ny, nx), x fastest
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FrameFormatError
from .grid import Grid

MAGIC = b"PQGF"
VERSION = 1

DIAGNOSTIC_COLUMNS = (
    "step", "t", "energy", "pv_mean", "pv_var", "pv_min", "pv_max", "sat_fraction",
    "rain_column", "clipped_mass", "total_water", "q_c_min", "q_r_min", "courant",
    "active_set_iterations",
)


@dataclass
class Frame:
    grid: Grid
    t: float
    fields: dict


def write_frame(path, grid: Grid, t: float, fields: dict) -> None:
    """Write named fields; each must have shape (nlev, ny, nx)."""
    head = [MAGIC, struct.pack("<I", VERSION), struct.pack("<3I", grid.nx, grid.ny, grid.nz),
            struct.pack("<4d", grid.Lx, grid.Ly, grid.H, float(t)), struct.pack("<I", len(fields))]
    body = []
    for name, arr in fields.items():
        a = np.asarray(arr, dtype="<f8")
        if a.ndim != 3 or a.shape[1:] != (grid.ny, grid.nx):
            raise FrameFormatError(f"field {name!r} has shape {a.shape}, expected (nlev, {grid.ny}, {grid.nx})")
        raw = name.encode("utf-8")
        head.append(struct.pack("<H", len(raw)) + raw + struct.pack("<I", a.shape[0]))
        body.append(np.ascontiguousarray(a).tobytes())
    Path(path).write_bytes(b"".join(head + body))


def read_frame(path) -> Frame:
    data = Path(path).read_bytes()
    pos = 0

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise FrameFormatError("truncated frame header")
        out = struct.unpack_from(fmt, data, pos)
        pos += size
        return out

    if data[:4] != MAGIC:
        raise FrameFormatError("not a frame file (bad magic bytes)")
    pos = 4
    (version,) = take("<I")
    if version != VERSION:
        raise FrameFormatError(f"unsupported frame version {version} (this reader handles {VERSION})")
    nx, ny, nz = take("<3I")
    Lx, Ly, H, t = take("<4d")
    (nfields,) = take("<I")
    layout = []
    for _ in range(nfields):
        (n,) = take("<H")
        if pos + n > len(data):
            raise FrameFormatError("truncated frame header")
        name = data[pos:pos + n].decode("utf-8")
        pos += n
        (nlev,) = take("<I")
        layout.append((name, nlev))
    fields = {}
    for name, nlev in layout:
        count = nlev * ny * nx
        if pos + 8 * count > len(data):
            raise FrameFormatError(f"truncated payload in field {name!r}")
        fields[name] = np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(nlev, ny, nx).copy()
        pos += 8 * count
    if pos != len(data):
        raise FrameFormatError("trailing bytes after last field")
    return Frame(Grid(nx, ny, nz, Lx, Ly, H), t, fields)


def write_diagnostics_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=DIAGNOSTIC_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: row[k] for k in DIAGNOSTIC_COLUMNS})


def read_diagnostics_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
