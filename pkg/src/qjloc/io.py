"""Readers and writers for density snapshots, event logs and observable series."""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .state import DensityGrid, GridSpec
from .trajectory import EventRecord, TrajectoryRecord

MAGIC = b"QJLOC1"
_HEADER = struct.Struct("<6sIIdd")

EVENT_COLUMNS = ("step", "time", "outcome", "theta", "q", "p_scatter_total", "norm_after")
SERIES_COLUMNS = ("step", "time", "width", "h1", "h2", "ratio", "asymmetry")


class SnapshotFormatError(ValueError):
    pass


def write_snapshot(path, d: DensityGrid) -> None:
    """Little-endian: magic, u32 D, u32 M, f64 L, f64 time, then M^D f64 values row-major."""
    grid = d.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, grid.dim, grid.m, grid.length, d.time))
        fh.write(np.ascontiguousarray(d.values, dtype="<f8").tobytes())


def read_snapshot(path) -> DensityGrid:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise SnapshotFormatError(f"{path}: truncated header")
    magic, dim, m, length, time = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise SnapshotFormatError(f"{path}: bad magic {magic!r}")
    grid = GridSpec(dim, m, length)
    expected = _HEADER.size + 8 * m**dim
    if len(raw) != expected:
        raise SnapshotFormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    values = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(grid.shape).astype(float)
    return DensityGrid(grid, values, time)


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.17g}"


def _write_header(fh, params: dict | None) -> None:
    for key, value in (params or {}).items():
        fh.write(f"# {key}={value}\n")


def read_params(path) -> dict[str, str]:
    """The ``# key=value`` lines at the top of a CSV written here."""
    out = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition("=")
            out[key] = value
    return out


def _data_lines(fh):
    return (line for line in fh if not line.startswith("#"))


def write_events(path, events: list[EventRecord], params: dict | None = None) -> None:
    with open(path, "w", newline="") as fh:
        _write_header(fh, params)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_COLUMNS)
        for e in events:
            w.writerow([fmt(getattr(e, c)) for c in EVENT_COLUMNS])


def read_events(path) -> list[EventRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(_data_lines(fh)))
    return [
        EventRecord(
            int(r["step"]),
            float(r["time"]),
            r["outcome"],
            float(r["theta"]),
            float(r["q"]),
            float(r["p_scatter_total"]),
            float(r["norm_after"]),
        )
        for r in rows
    ]


def write_series(path, record: TrajectoryRecord, params: dict | None = None) -> None:
    with open(path, "w", newline="") as fh:
        _write_header(fh, params)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_COLUMNS)
        for row in zip(*(record.series[c] for c in SERIES_COLUMNS)):
            w.writerow([fmt(v) for v in row])


def read_series(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(_data_lines(fh)))
    return {c: np.array([float(r[c]) for r in rows]) for c in SERIES_COLUMNS}


def write_table(path, columns: dict[str, list], params: dict | None = None) -> None:
    names = list(columns)
    with open(path, "w", newline="") as fh:
        _write_header(fh, params)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*(columns[c] for c in names)):
            w.writerow([fmt(v) for v in row])


def read_table(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(_data_lines(fh)))
    if not rows:
        return {}
    return {c: np.array([float(r[c]) for r in rows]) for c in rows[0]}


def write_manifest(path, manifest: dict) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())
