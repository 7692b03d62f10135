"""Binary snapshot files.

Layout (all little-endian)::

    offset 0   4s   magic b"PMED"
           4   u4   format version
           8   u1   kind (0 density, 1 scalar)
           9   u1   d
          10   u2   reserved (0)
          12   d*u8 cells per axis
               d*f8 origin
               d*f8 spacing
               f8   time
               u8   value count
               n*f8 values in C order
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import SnapshotError
from .grid import DensityField, Grid, ScalarField

MAGIC = b"PMED"
VERSION = 1
KINDS = {0: DensityField, 1: ScalarField}

_PREFIX = struct.Struct("<4sIBBH")


def encode_snapshot(field: ScalarField) -> bytes:
    grid = field.grid
    kind = 0 if isinstance(field, DensityField) else 1
    d = grid.dim
    parts = [
        _PREFIX.pack(MAGIC, VERSION, kind, d, 0),
        struct.pack(f"<{d}Q", *grid.cells),
        struct.pack(f"<{d}d", *grid.origin),
        struct.pack(f"<{d}d", *grid.spacing),
        struct.pack("<dQ", field.time, grid.size),
        np.ascontiguousarray(field.values, dtype="<f8").tobytes(order="C"),
    ]
    return b"".join(parts)


def write_snapshot(field: ScalarField, path) -> Path:
    path = Path(path)
    try:
        path.write_bytes(encode_snapshot(field))
    except OSError as exc:
        raise SnapshotError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, fmt: str, what: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise SnapshotError(f"truncated snapshot while reading {what}", self.pos)
        out = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return out


def decode_snapshot(data: bytes) -> ScalarField:
    if len(data) < 4 or data[:4] != MAGIC:
        raise SnapshotError(f"bad magic {bytes(data[:4])!r}, expected {MAGIC!r}", 0)
    r = _Reader(data)
    _, version, kind, d, _ = r.take(_PREFIX.format, "header")
    if version != VERSION:
        raise SnapshotError(f"unsupported version {version} (this reader handles {VERSION})", 4)
    if kind not in KINDS:
        raise SnapshotError(f"unknown field kind {kind}", 8)
    if d not in (1, 2):
        raise SnapshotError(f"unsupported dimension {d}", 9)
    cells = r.take(f"<{d}Q", "cell counts")
    origin = r.take(f"<{d}d", "origin")
    spacing = r.take(f"<{d}d", "spacing")
    time, count = r.take("<dQ", "time and value count")
    if count != int(np.prod(cells)):
        raise SnapshotError(f"value count {count} does not match cells {cells}", r.pos - 8)
    nbytes = 8 * count
    if r.pos + nbytes > len(data):
        raise SnapshotError(f"truncated snapshot: expected {count} values", len(data))
    if r.pos + nbytes < len(data):
        raise SnapshotError("trailing bytes after the value block", r.pos + nbytes)
    values = np.frombuffer(data, dtype="<f8", count=count, offset=r.pos).astype(np.float64).reshape(cells)
    try:
        grid = Grid(d, tuple(int(c) for c in cells), tuple(origin), tuple(spacing))
        return KINDS[kind](grid, values, time)
    except ValueError as exc:
        raise SnapshotError(f"invalid snapshot contents: {exc}", 12) from exc


def read_snapshot(path) -> ScalarField:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise SnapshotError(f"cannot read {path}: {exc.strerror or exc}") from exc
    return decode_snapshot(data)
