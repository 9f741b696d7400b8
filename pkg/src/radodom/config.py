"""Odometry tunables and the ``key = value`` configuration dialect.

Dialect: one ``key = value`` per line, ``#`` starts a comment, blank lines are
ignored. Unknown keys are rejected so typos surface immediately. The same
line grammar is reused by the simulator's scene and trajectory files, which
additionally allow some keys to repeat.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .errors import ConfigError


def parse_kv_text(text, repeatable=(), source="<string>"):
    """Split dialect text into ``(key, value, lineno)`` triples.

    Keys not in ``repeatable`` may appear at most once.
    """
    entries = []
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in seen and key not in repeatable:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        seen.add(key)
        entries.append((key, value, lineno))
    return entries


def parse_bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


@dataclass
class OdomConfig:
    """All pipeline tunables. Distances in meters, speeds in m/s."""

    # feature extraction
    voxel_size: float = 1.0
    neighbor_radius: Optional[float] = None  # None -> voxel_size
    min_neighbors: int = 5
    trim_fov: bool = True  # drop cells whose neighborhood is cut by the scan extent
    w_thre: Optional[float] = None  # None -> "auto" percentile calibration
    w_thre_percentile: float = 99.0
    w_thre_calib_scans: int = 10
    # ego-velocity
    doppler_sign: int = 1
    gaussian_k_sigma: float = 3.0
    dbscan_eps: float = 0.25
    dbscan_min_pts: int = 5
    fit_mode: str = "general"
    min_static: int = 10
    min_xy_range: float = 0.1
    # scan matching
    z_thre: float = 0.8
    huber_delta: float = 1e-4  # m^2; small delta = plain least squares in the residual
    assoc_radius: Optional[float] = None  # None -> 2 * voxel_size
    assoc_radius_min: Optional[float] = None  # None -> voxel_size / 2
    assoc_shrink: float = 0.5  # gate shrink factor when the pose settles
    max_gn_iters: int = 10
    max_outer_iters: int = 8
    # keyframes
    keyframe_trans_thresh: float = 1.0
    keyframe_rot_thresh: float = 5.0  # degrees
    window_size: int = 4
    # pipeline switches
    use_ego_velocity: bool = True
    remove_dynamic: bool = True
    deskew: bool = True

    def __post_init__(self):
        self.validate()

    @property
    def neighborhood_radius(self) -> float:
        return self.voxel_size if self.neighbor_radius is None else self.neighbor_radius

    @property
    def association_radius(self) -> float:
        return 2.0 * self.voxel_size if self.assoc_radius is None else self.assoc_radius

    @property
    def association_radius_min(self) -> float:
        r = 0.5 * self.voxel_size if self.assoc_radius_min is None else self.assoc_radius_min
        return min(r, self.association_radius)

    @property
    def keyframe_rot_thresh_rad(self) -> float:
        return math.radians(self.keyframe_rot_thresh)

    def validate(self):
        positive = [
            "voxel_size", "min_neighbors", "dbscan_eps", "dbscan_min_pts", "gaussian_k_sigma",
            "huber_delta", "max_gn_iters", "max_outer_iters", "keyframe_trans_thresh",
            "keyframe_rot_thresh", "window_size", "min_static", "w_thre_calib_scans",
        ]
        for name in positive:
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be positive, got {v!r}")
        if not 0.0 < self.assoc_shrink <= 1.0:
            raise ConfigError(f"assoc_shrink must lie in (0, 1], got {self.assoc_shrink!r}")
        for name in ("neighbor_radius", "assoc_radius", "assoc_radius_min"):
            v = getattr(self, name)
            if v is not None and not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be positive, got {v!r}")
        if self.w_thre is not None and not (self.w_thre >= 0):
            raise ConfigError(f"w_thre must be >= 0 or 'auto', got {self.w_thre!r}")
        if not 0.0 < self.w_thre_percentile <= 100.0:
            raise ConfigError("w_thre_percentile must be in (0, 100]")
        if self.doppler_sign not in (1, -1):
            raise ConfigError(f"doppler_sign must be +1 or -1, got {self.doppler_sign!r}")
        if self.fit_mode not in ("general", "fixed_axis"):
            raise ConfigError(f"fit_mode must be 'general' or 'fixed_axis', got {self.fit_mode!r}")
        if not 0.0 <= self.z_thre <= 1.0:
            raise ConfigError(f"z_thre must lie in [0, 1], got {self.z_thre!r}")
        if not self.min_xy_range >= 0:
            raise ConfigError("min_xy_range must be >= 0")

    def replace(self, **changes) -> "OdomConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_text(cls, text, source="<string>") -> "OdomConfig":
        fields = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value, lineno in parse_kv_text(text, source=source):
            if key not in fields:
                raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
            try:
                kwargs[key] = _coerce(fields[key], value)
            except ValueError as exc:
                raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "OdomConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_text(text, source=str(path))

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if v is None:
                v = "auto"
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


_AUTO_KEYS = {"w_thre", "neighbor_radius", "assoc_radius", "assoc_radius_min"}


def _coerce(f, value: str):
    if f.name in _AUTO_KEYS and value.lower() == "auto":
        return None
    if f.name == "fit_mode":
        return value
    if f.type in ("bool", bool):
        return parse_bool(value)
    if f.type in ("int", int) or f.name == "doppler_sign":
        as_float = float(value)
        if not as_float.is_integer():
            raise ValueError(f"expected an integer, got {value!r}")
        return int(as_float)
    return float(value)
