"""On-disk formats: binary field snapshots and the CSV energy log.

Snapshot layout (all little-endian)::

    b"BCPS" | version u32 | nx u32 | ny u32 | time f64 | name_len u32 | name utf-8
    | nx*ny f64 values, row-major (y outer, x inner)
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"BCPS"
VERSION = 1
_HEADER = struct.Struct("<4sIIIdI")


class SnapshotError(ValueError):
    """A snapshot file that does not follow the documented layout."""


@dataclass(frozen=True)
class Snapshot:
    name: str
    time: float
    values: np.ndarray


def encode_snapshot(values: np.ndarray, time: float, name: str) -> bytes:
    values = np.asarray(values, dtype="<f8")
    if values.ndim != 2:
        raise ValueError("snapshots hold 2D scalar fields")
    ny, nx = values.shape
    name_bytes = name.encode("utf-8")
    head = _HEADER.pack(MAGIC, VERSION, nx, ny, float(time), len(name_bytes))
    return head + name_bytes + np.ascontiguousarray(values).tobytes()


def decode_snapshot(data: bytes) -> Snapshot:
    if len(data) < _HEADER.size:
        raise SnapshotError("file too short for a snapshot header")
    magic, version, nx, ny, time, name_len = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotError(f"bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    start = _HEADER.size + name_len
    payload = data[start:]
    if len(payload) != nx * ny * 8:
        raise SnapshotError(f"payload holds {len(payload)} bytes, expected {nx * ny * 8}")
    name = data[_HEADER.size:start].decode("utf-8")
    values = np.frombuffer(payload, dtype="<f8").reshape(ny, nx).astype(float)
    return Snapshot(name, time, values)


def write_snapshot(path, values: np.ndarray, time: float, name: str = "phi") -> Path:
    path = Path(path)
    path.write_bytes(encode_snapshot(values, time, name))
    return path


def read_snapshot(path) -> Snapshot:
    return decode_snapshot(Path(path).read_bytes())


def snapshot_to_csv(src, dst) -> Path:
    """Write the snapshot grid as plain CSV, one row per y index."""
    snap = read_snapshot(src)
    dst = Path(dst)
    np.savetxt(dst, snap.values, delimiter=",", fmt="%.17g",
               header=f"{snap.name} t={snap.time!r}", comments="# ")
    return dst


BASE_COLUMNS = ("time", "energy", "mass", "grad_w_sq", "identity_residual", "iterations")
NS_COLUMNS = ("grad_u_sq", "div_u")


class EnergyLog:
    """CSV writer for per-step diagnostics, keeping every ``stride``-th row.

    Use as a context manager; ``record`` accepts a ``StepDiagnostics`` and
    ``force=True`` writes the row regardless of the stride.
    """

    def __init__(self, path, coupled: bool = False, stride: int = 10):
        if stride < 1:
            raise ValueError("stride must be >= 1")
        self.path = Path(path)
        self.columns = BASE_COLUMNS + (NS_COLUMNS if coupled else ())
        self.stride = stride
        self._count = 0
        self._last_time = None
        self._fh = None
        self._writer = None

    def __enter__(self):
        self._fh = self.path.open("w", newline="")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(self.columns)
        return self

    def __exit__(self, *exc):
        self._fh.close()
        return False

    def write_row(self, time, energy, mass, grad_w_sq=0.0, residual=0.0, iterations=0,
                  grad_u_sq=0.0, div_u=0.0):
        if self._last_time is not None and time <= self._last_time:
            return
        row = [repr(float(time)), repr(float(energy)), repr(float(mass)), repr(float(grad_w_sq)),
               repr(float(residual)), str(int(iterations))]
        if len(self.columns) > len(BASE_COLUMNS):
            row += [repr(float(grad_u_sq)), repr(float(div_u))]
        self._writer.writerow(row)
        self._last_time = time

    def record(self, diag, force: bool = False):
        self._count += 1
        if force or self._count % self.stride == 0:
            self.write_row(diag.time, diag.energy, diag.mass, diag.grad_w_norm_sq,
                           diag.energy_identity_residual, diag.solver_iterations,
                           diag.grad_u_norm_sq, diag.div_u_norm)


def read_energy_log(path) -> dict:
    """Columns of an energy log as float arrays keyed by header name."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(x) for x in r] for r in body]).reshape(len(body), len(header))
    return {name: data[:, j] for j, name in enumerate(header)}
