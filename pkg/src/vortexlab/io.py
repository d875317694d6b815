"""
Persistence: VXF1 snapshots, CSV tables and run manifests.

VXF1 layout (all little-endian)::

    offset  size  content
    0       4     magic b"VXF1"
    4       8     int64   grid size n
    12      8     float64 viscosity
    20      8     float64 time
    28      8     float64 dissipation exponent alpha
    36      8     uint64  flags (bit 0 divergence-free, bit 1 zero-mean, bit 2 scalar field)
    44      ...   float64 payload

The payload walks ``k1`` and ``k2`` over ``-n/2+1 .. n/2`` and ``k3`` over
``0 .. n/2`` lexicographically (``k1`` slowest); for every wavevector it
stores each component as ``re, im``.  Nyquist entries are written as zero.
"""
from __future__ import annotations

import contextlib
import csv
import hashlib
import io as _io
import json
import os
import struct
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .spectral import FourierField, Grid

MAGIC = b"VXF1"
HEADER = struct.Struct("<4sqdddQ")

FLAG_DIVFREE = 1
FLAG_ZERO_MEAN = 2
FLAG_SCALAR = 4


class SnapshotError(ValueError):
    MAGIC_MISMATCH = 10
    TRUNCATED = 11
    SIZE_MISMATCH = 12
    BAD_HEADER = 13

    def __init__(self, code: int, message: str):
        super().__init__(f"[VXF1 error {code}] {message}")
        self.code = code


@dataclass
class Snapshot:
    field: FourierField
    nu: float = 0.0
    t: float = 0.0
    alpha: float = 1.0
    flags: int = 0


def _order(n: int) -> np.ndarray:
    # rfftn row index for k in -n/2+1 .. n/2
    return np.arange(-n // 2 + 1, n // 2 + 1) % n


def snapshot_bytes(f: FourierField, nu: float = 0.0, t: float = 0.0, alpha: float = 1.0) -> bytes:
    n = f.grid.n
    flags = 0
    if f.ncomp == 1:
        flags |= FLAG_SCALAR
    else:
        if f.divergence_residual() <= 1e-12:
            flags |= FLAG_DIVFREE
    if f.is_zero_mean:
        flags |= FLAG_ZERO_MEAN
    idx = _order(n)
    c = f.coeffs[:, idx][:, :, idx]  # (ncomp, k1, k2, k3)
    c = np.moveaxis(c, 0, -1)  # k1, k2, k3, comp
    payload = np.empty(c.shape + (2,), dtype="<f8")
    payload[..., 0] = c.real
    payload[..., 1] = c.imag
    return HEADER.pack(MAGIC, n, float(nu), float(t), float(alpha), flags) + payload.tobytes()


def parse_snapshot(data: bytes) -> Snapshot:
    if len(data) < 4 or data[:4] != MAGIC:
        if len(data) < 4 and MAGIC.startswith(data):
            raise SnapshotError(SnapshotError.TRUNCATED, "file ends inside the magic")
        raise SnapshotError(SnapshotError.MAGIC_MISMATCH, f"bad magic {data[:4]!r}")
    if len(data) < HEADER.size:
        raise SnapshotError(SnapshotError.TRUNCATED, f"header needs {HEADER.size} bytes, got {len(data)}")
    _, n, nu, t, alpha, flags = HEADER.unpack_from(data)
    if n < 8 or n & (n - 1) or n > 4096:
        raise SnapshotError(SnapshotError.BAD_HEADER, f"invalid grid size {n}")
    if flags & ~(FLAG_DIVFREE | FLAG_ZERO_MEAN | FLAG_SCALAR):
        raise SnapshotError(SnapshotError.BAD_HEADER, f"unknown flag bits {flags:#x}")
    ncomp = 1 if flags & FLAG_SCALAR else 3
    body = len(data) - HEADER.size
    expect = n * n * (n // 2 + 1) * ncomp * 16
    if body % 16:
        raise SnapshotError(SnapshotError.TRUNCATED, f"payload of {body} bytes ends mid-coefficient")
    if body != expect:
        raise SnapshotError(SnapshotError.SIZE_MISMATCH, f"header implies {expect} payload bytes, found {body}")
    raw = np.frombuffer(data, dtype="<f8", offset=HEADER.size).reshape(n, n, n // 2 + 1, ncomp, 2)
    c = raw[..., 0] + 1j * raw[..., 1]
    grid = Grid(int(n))
    coeffs = np.zeros((ncomp,) + grid.spectral_shape, complex)
    idx = _order(n)
    k3 = np.arange(n // 2 + 1)
    coeffs[:, idx[:, None, None], idx[None, :, None], k3[None, None, :]] = np.moveaxis(c, -1, 0)
    return Snapshot(FourierField(grid, coeffs), nu, t, alpha, int(flags))


def read_snapshot(path) -> Snapshot:
    return parse_snapshot(Path(path).read_bytes())


def write_snapshot(f: FourierField, path, nu: float = 0.0, t: float = 0.0, alpha: float = 1.0) -> Path:
    return atomic_write(path, snapshot_bytes(f, nu, t, alpha))


# ---------------------------------------------------------------------------
# text outputs


def atomic_write(path, data) -> Path:
    """Write via a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise
    return path


def fmt(x) -> str:
    """Floats with 17 significant digits (round-trip exact); everything else via str."""
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    return str(x)


def csv_text(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows) -> Path:
    return atomic_write(path, csv_text(header, rows))


def read_csv(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, tuple):
        return list(v)
    return str(v)


def write_records(path, records) -> Path:
    """One JSON object per line."""
    lines = [json.dumps(r, default=_jsonable, sort_keys=True) for r in records]
    return atomic_write(path, "\n".join(lines) + ("\n" if lines else ""))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True, default=_jsonable).encode()).hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    version: str
    inputs: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    started: float = field(default_factory=time.time)
    finished: float | None = None

    def add_input(self, path):
        self.inputs[str(path)] = sha256_file(path)

    def add_output(self, path) -> Path:
        self.outputs.append(str(path))
        return Path(path)

    def as_dict(self) -> dict:
        return dict(command=self.command, config=self.config, config_hash=config_hash(self.config),
                    version=self.version, inputs=self.inputs, outputs=self.outputs,
                    started=self.started, finished=self.finished)

    def write(self, out_dir) -> Path:
        self.finished = time.time()
        path = Path(out_dir) / "manifest.json"
        return atomic_write(path, json.dumps(self.as_dict(), indent=2, sort_keys=True, default=_jsonable) + "\n")
