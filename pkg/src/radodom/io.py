"""Reading and writing radar scans, scan sequences and TUM trajectories.

Scan CSV (one file per scan)::

    timestamp_s,x_m,y_m,z_m,doppler_mps,intensity,time_offset_s

Sequence layout: ``<dir>/scans/<index:06>_<timestamp_ns>.csv``.

TUM trajectory: ``timestamp tx ty tz qx qy qz qw`` per line.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import ParseError
from .geometry import Pose, Trajectory

SCAN_HEADER = "timestamp_s,x_m,y_m,z_m,doppler_mps,intensity,time_offset_s"
SCAN_NAME_RE = re.compile(r"^(\d{6})_(\d+)\.csv$")
QUAT_NORM_TOL = 1e-3


def _readonly(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RadarScan:
    """One radar frame stored column-wise.

    ``positions`` is ``(N, 3)`` in the radar body frame (x forward, y left,
    z up); ``doppler`` is the signed radial velocity; ``time_offset`` is
    relative to ``timestamp`` (zeros when the sensor gives no per-point time).
    """

    timestamp: float
    positions: np.ndarray
    doppler: np.ndarray
    intensity: np.ndarray
    time_offset: np.ndarray = None
    n_dropped: int = 0

    def __post_init__(self):
        pos = _readonly(self.positions).reshape(-1, 3)
        n = len(pos)
        if n == 0:
            raise ParseError("radar scan has no points")
        dop = _readonly(self.doppler).reshape(-1)
        inten = _readonly(self.intensity).reshape(-1)
        off = np.zeros(n) if self.time_offset is None else self.time_offset
        off = _readonly(off).reshape(-1)
        if not (len(dop) == len(inten) == len(off) == n):
            raise ParseError("radar scan columns have mismatched lengths")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "doppler", dop)
        object.__setattr__(self, "intensity", inten)
        object.__setattr__(self, "time_offset", off)
        object.__setattr__(self, "timestamp", float(self.timestamp))

    def __len__(self):
        return len(self.positions)

    def subset(self, index) -> "RadarScan":
        """New scan holding the points selected by ``index`` (mask or indices)."""
        return RadarScan(
            self.timestamp,
            self.positions[index],
            self.doppler[index],
            self.intensity[index],
            self.time_offset[index],
        )

    def with_positions(self, positions) -> "RadarScan":
        return RadarScan(self.timestamp, positions, self.doppler, self.intensity, self.time_offset)

    @property
    def has_time_offsets(self) -> bool:
        return bool(np.any(self.time_offset != 0.0))


def _fmt(x) -> str:
    return format(float(x), ".9g")


def _fmt_time(t) -> str:
    return format(float(t), ".9f")


def format_scan(scan: RadarScan) -> str:
    ts = _fmt_time(scan.timestamp)
    lines = [SCAN_HEADER]
    cols = np.column_stack([scan.positions, scan.doppler, scan.intensity, scan.time_offset])
    for row in cols:
        lines.append(ts + "," + ",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def write_scan_file(scan: RadarScan, path) -> None:
    Path(path).write_text(format_scan(scan))


def parse_scan(text: str, source="<string>") -> RadarScan:
    lines = text.splitlines()
    if not lines or lines[0].strip() != SCAN_HEADER:
        raise ParseError(f"{source}: malformed header, expected {SCAN_HEADER!r}")
    rows = []
    dropped = 0
    timestamp = None
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 7:
            raise ParseError(f"{source}:{lineno}: expected 7 fields, got {len(parts)}")
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            raise ParseError(f"{source}:{lineno}: non-numeric field in {line!r}") from None
        if not math.isfinite(vals[0]):
            raise ParseError(f"{source}:{lineno}: non-finite timestamp")
        if timestamp is None:
            timestamp = vals[0]
        elif vals[0] != timestamp:
            raise ParseError(f"{source}:{lineno}: timestamp differs from first row")
        x, y, z, d, w, off = vals[1:]
        if not all(math.isfinite(v) for v in vals[1:]) or w < 0 or (x == 0 and y == 0 and z == 0):
            dropped += 1
            continue
        rows.append(vals[1:])
    if not rows:
        raise ParseError(f"{source}: no valid points ({dropped} dropped)")
    a = np.array(rows)
    return RadarScan(timestamp, a[:, :3], a[:, 3], a[:, 4], a[:, 5], n_dropped=dropped)


def read_scan_file(path) -> RadarScan:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read scan {path}: {exc}") from None
    return parse_scan(text, source=str(path))


def scan_filename(index: int, timestamp: float) -> str:
    return f"{index:06d}_{int(round(timestamp * 1e9))}.csv"


def list_sequence(directory) -> list[Path]:
    """Validated, index-ordered scan file paths of a sequence directory."""
    scan_dir = Path(directory) / "scans"
    if not scan_dir.is_dir():
        raise ParseError(f"{directory}: missing scans/ subdirectory")
    entries = []
    for p in scan_dir.iterdir():
        m = SCAN_NAME_RE.match(p.name)
        if m is None:
            continue
        entries.append((int(m.group(1)), int(m.group(2)), p))
    if not entries:
        raise ParseError(f"{scan_dir}: no scan files")
    entries.sort()
    first = entries[0][0]
    for k, (idx, ns, _) in enumerate(entries):
        if idx != first + k:
            raise ParseError(f"{scan_dir}: missing scan index {first + k:06d}")
        if k and ns <= entries[k - 1][1]:
            raise ParseError(f"{scan_dir}: non-monotonic timestamp at index {idx:06d}")
    return [p for _, _, p in entries]


def read_sequence(directory) -> Iterator[RadarScan]:
    """Yield scans in index order; layout problems raise before the first yield."""
    paths = list_sequence(directory)

    def gen():
        last = -math.inf
        for p in paths:
            scan = read_scan_file(p)
            if not scan.timestamp > last:
                raise ParseError(f"{p}: non-monotonic scan timestamp {scan.timestamp}")
            last = scan.timestamp
            yield scan

    return gen()


def write_sequence(scans, directory) -> list[Path]:
    scan_dir = Path(directory) / "scans"
    scan_dir.mkdir(parents=True, exist_ok=True)
    out = []
    for i, scan in enumerate(scans):
        p = scan_dir / scan_filename(i, scan.timestamp)
        write_scan_file(scan, p)
        out.append(p)
    return out


def format_trajectory_tum(traj) -> str:
    lines = []
    for pose in traj:
        q = pose.quaternion()
        vals = [*pose.t, *q]
        lines.append(_fmt_time(pose.time) + " " + " ".join(_fmt(v) for v in vals))
    return "\n".join(lines) + ("\n" if lines else "")


def write_trajectory_tum(traj, path) -> None:
    Path(path).write_text(format_trajectory_tum(traj))


def parse_trajectory_tum(text: str, source="<string>") -> Trajectory:
    traj = Trajectory()
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        parts = s.split()
        if len(parts) != 8:
            raise ParseError(f"{source}:{lineno}: expected 8 fields, got {len(parts)}")
        try:
            v = np.array([float(p) for p in parts])
        except ValueError:
            raise ParseError(f"{source}:{lineno}: non-numeric field") from None
        if not np.all(np.isfinite(v)):
            raise ParseError(f"{source}:{lineno}: non-finite value")
        q = v[4:]
        norm = np.linalg.norm(q)
        if abs(norm - 1.0) > QUAT_NORM_TOL:
            raise ParseError(f"{source}:{lineno}: quaternion norm {norm:.6g} is not unit")
        try:
            traj.append(Pose.from_quaternion(q / norm, v[1:4], time=v[0]))
        except Exception as exc:
            raise ParseError(f"{source}:{lineno}: {exc}") from None
    return traj


def read_trajectory_tum(path) -> Trajectory:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read trajectory {path}: {exc}") from None
    return parse_trajectory_tum(text, source=str(path))


def write_jsonl(records, path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
