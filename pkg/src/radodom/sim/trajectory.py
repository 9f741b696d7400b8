"""Ground-vehicle sensor trajectories from planar waypoints.

Trajectory files use the ``key = value`` dialect::

    speed = 10            # m/s, constant
    rate_hz = 10          # scan rate
    height = 1.0          # sensor height above z = 0
    turn_length = 15      # arc length (m) over which each corner's heading change is spread
    frames = 100          # optional; default covers the whole path
    start_time = 0
    waypoint = 0 0        # repeatable, at least two
    waypoint = 100 0

Heading along the polyline is smoothed with a raised-cosine kernel of width
``turn_length`` so yaw rate ramps in and out of each corner; positions are
then integrated from the smoothed heading at constant speed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..config import parse_kv_text
from ..errors import ConfigError
from ..geometry import Pose, Trajectory, rz

DS = 0.01


@dataclass
class TrajectorySpec:
    waypoints: list = field(default_factory=lambda: [(0.0, 0.0), (100.0, 0.0)])
    speed: float = 10.0
    rate_hz: float = 10.0
    height: float = 1.0
    turn_length: float = 15.0
    frames: Optional[int] = None
    start_time: float = 0.0

    def __post_init__(self):
        if len(self.waypoints) < 2:
            raise ConfigError("trajectory needs at least two waypoints")
        if self.speed < 0 or self.rate_hz <= 0 or self.turn_length < 0:
            raise ConfigError("speed, rate_hz and turn_length must be non-negative (rate positive)")


@dataclass(frozen=True)
class SampledTrajectory:
    """Per-frame ground truth: sensor poses plus world velocity and body yaw rate."""

    poses: Trajectory
    velocities: np.ndarray  # (n, 3) world frame
    yaw_rates: np.ndarray  # (n,) rad/s about body z

    def __len__(self):
        return len(self.poses)


class _Path:
    def __init__(self, spec: TrajectorySpec):
        wp = np.asarray(spec.waypoints, dtype=float)
        seg = np.diff(wp, axis=0)
        seg_len = np.linalg.norm(seg, axis=1)
        if np.any(seg_len <= 0):
            raise ConfigError("consecutive waypoints must differ")
        heading = np.arctan2(seg[:, 1], seg[:, 0])
        heading = np.concatenate([[heading[0]], heading[0] + np.cumsum(
            (np.diff(heading) + np.pi) % (2 * np.pi) - np.pi)])
        total = seg_len.sum()
        n = int(np.ceil(total / DS)) + 1
        s = np.linspace(0.0, total, n)
        ds = s[1] - s[0] if n > 1 else DS
        seg_idx = np.minimum(np.searchsorted(np.cumsum(seg_len), s, side="right"), len(seg) - 1)
        psi = heading[seg_idx]
        if spec.turn_length > 0:
            half = max(int(round(0.5 * spec.turn_length / ds)), 1)
            k = 0.5 * (1.0 + np.cos(np.pi * np.arange(-half, half + 1) / (half + 1)))
            k /= k.sum()
            padded = np.concatenate([np.full(half, psi[0]), psi, np.full(half, psi[-1])])
            psi = np.convolve(padded, k, mode="valid")
        self.s = s
        self.psi = psi
        step = np.column_stack([np.cos(psi), np.sin(psi)])
        xy = np.zeros((n, 2))
        xy[1:] = np.cumsum(0.5 * (step[1:] + step[:-1]) * ds, axis=0)
        self.xy = xy + wp[0]
        self.dpsi = np.gradient(psi, ds) if n > 1 else np.zeros(n)
        self.length = total

    def at(self, s):
        x = np.interp(s, self.s, self.xy[:, 0])
        y = np.interp(s, self.s, self.xy[:, 1])
        psi = np.interp(s, self.s, self.psi)
        dpsi = np.interp(s, self.s, self.dpsi)
        return x, y, psi, dpsi


def sample_trajectory(spec: TrajectorySpec) -> SampledTrajectory:
    path = _Path(spec)
    step = spec.speed / spec.rate_hz
    if spec.frames is not None:
        n = spec.frames
    elif step > 0:
        n = int(path.length / step + 1e-9)
    else:
        raise ConfigError("a stationary trajectory needs an explicit frame count")
    times = spec.start_time + np.arange(n) / spec.rate_hz
    s = np.minimum(np.arange(n) * step, path.length)
    poses, vels, rates = [], [], []
    for k in range(n):
        x, y, psi, dpsi = path.at(s[k])
        poses.append(rz(psi, (x, y, spec.height), time=times[k]))
        vels.append((spec.speed * np.cos(psi), spec.speed * np.sin(psi), 0.0))
        rates.append(dpsi * spec.speed)
    return SampledTrajectory(Trajectory(poses), np.array(vels).reshape(-1, 3), np.array(rates))


def parse_trajectory_spec(text: str, source="<string>") -> TrajectorySpec:
    kwargs = {}
    waypoints = []
    for key, value, lineno in parse_kv_text(text, repeatable={"waypoint"}, source=source):
        try:
            if key == "waypoint":
                vals = [float(v) for v in value.split()]
                if len(vals) != 2:
                    raise ValueError("waypoint needs x y")
                waypoints.append(tuple(vals))
            elif key == "frames":
                kwargs[key] = int(value)
            elif key in ("speed", "rate_hz", "height", "turn_length", "start_time"):
                kwargs[key] = float(value)
            else:
                raise ConfigError(f"{source}:{lineno}: unknown trajectory key {key!r}")
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    if waypoints:
        kwargs["waypoints"] = waypoints
    return TrajectorySpec(**kwargs)


def read_trajectory_spec(path) -> TrajectorySpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read trajectory spec {path}: {exc}") from None
    return parse_trajectory_spec(text, source=str(path))


def format_trajectory_spec(spec: TrajectorySpec) -> str:
    lines = [
        f"speed = {spec.speed}",
        f"rate_hz = {spec.rate_hz}",
        f"height = {spec.height}",
        f"turn_length = {spec.turn_length}",
        f"start_time = {spec.start_time}",
    ]
    if spec.frames is not None:
        lines.append(f"frames = {spec.frames}")
    lines += [f"waypoint = {x:.9g} {y:.9g}" for x, y in spec.waypoints]
    return "\n".join(lines) + "\n"
