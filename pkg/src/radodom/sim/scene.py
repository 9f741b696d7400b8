"""Scene and sensor descriptions for the synthetic radar, plus their file dialect.

Scene files use the ``key = value`` dialect with repeatable geometry keys::

    ground = <z> <reflectivity>
    patch  = <cx cy cz> <ax ay az> <bx by bz> <reflectivity>   # corner, two edges
    box    = <cx cy cz> <lx ly lz> <reflectivity>              # static box: 4 walls + roof
    mover  = <px py pz> <vx vy vz> <lx ly lz> <reflectivity>   # moving box, center at t=0

Sensor keys (all optional) may appear in the same file: ``fov_azimuth``,
``fov_elevation`` (degrees), ``max_range``, ``range_noise_sigma``,
``doppler_noise_sigma``, ``intensity_noise_sigma``, ``points_per_scan``,
``doppler_sign``, ``scan_duration``, ``ghost_fraction``, ``nominal_range``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..config import parse_kv_text
from ..errors import ConfigError


@dataclass(frozen=True)
class Patch:
    """Planar parallelogram ``corner + a*edge_a + b*edge_b``, ``a, b in [0, 1]``."""

    corner: tuple
    edge_a: tuple
    edge_b: tuple
    reflectivity: float = 1.0

    def __post_init__(self):
        if not self.reflectivity > 0:
            raise ConfigError("patch reflectivity must be positive")
        if np.linalg.norm(np.cross(self.edge_a, self.edge_b)) < 1e-12:
            raise ConfigError("patch edges must be linearly independent")

    @property
    def normal(self) -> np.ndarray:
        n = np.cross(self.edge_a, self.edge_b)
        return n / np.linalg.norm(n)


@dataclass(frozen=True)
class Mover:
    """Axis-aligned box translating at constant world velocity."""

    position: tuple
    velocity: tuple
    extent: tuple
    reflectivity: float = 1.0

    def __post_init__(self):
        if not self.reflectivity > 0:
            raise ConfigError("mover reflectivity must be positive")
        if min(self.extent) <= 0:
            raise ConfigError("mover extent must be positive")

    def center(self, t) -> np.ndarray:
        return np.asarray(self.position, dtype=float) + np.asarray(self.velocity, dtype=float) * t


def box_patches(center, extent, reflectivity=1.0, roof=True) -> list[Patch]:
    """Four vertical faces (and the roof) of an axis-aligned box."""
    c = np.asarray(center, dtype=float)
    lx, ly, lz = extent
    lo = c - 0.5 * np.asarray(extent, dtype=float)
    x0, y0, z0 = lo
    x1, y1 = x0 + lx, y0 + ly
    ex, ey, ez = (lx, 0.0, 0.0), (0.0, ly, 0.0), (0.0, 0.0, lz)
    faces = [
        Patch((x0, y0, z0), ex, ez, reflectivity),
        Patch((x0, y1, z0), ex, ez, reflectivity),
        Patch((x0, y0, z0), ey, ez, reflectivity),
        Patch((x1, y0, z0), ey, ez, reflectivity),
    ]
    if roof:
        faces.append(Patch((x0, y0, z0 + lz), ex, ey, reflectivity))
    return faces


@dataclass
class SceneModel:
    patches: list = field(default_factory=list)
    movers: list = field(default_factory=list)
    ground: bool = True
    ground_z: float = 0.0
    ground_reflectivity: float = 0.3


@dataclass
class SensorSpec:
    fov_azimuth: float = 120.0  # degrees, full width
    fov_elevation: float = 40.0
    max_range: float = 80.0
    range_noise_sigma: float = 0.05
    doppler_noise_sigma: float = 0.1
    intensity_noise_sigma: float = 0.05
    points_per_scan: int = 1500
    doppler_sign: int = 1
    scan_duration: float = 0.0
    ghost_fraction: float = 0.02
    nominal_range: float = 10.0

    def __post_init__(self):
        for name in ("fov_azimuth", "fov_elevation"):
            v = getattr(self, name)
            if not 0 < v < 360:
                raise ConfigError(f"{name} must lie in (0, 360), got {v}")
        for name in ("range_noise_sigma", "doppler_noise_sigma", "intensity_noise_sigma",
                     "scan_duration", "ghost_fraction"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.max_range <= 0 or self.points_per_scan <= 0 or self.nominal_range <= 0:
            raise ConfigError("max_range, nominal_range and points_per_scan must be positive")
        if self.doppler_sign not in (1, -1):
            raise ConfigError("doppler_sign must be +1 or -1")

    def noise_free(self) -> "SensorSpec":
        return dataclasses.replace(
            self, range_noise_sigma=0.0, doppler_noise_sigma=0.0,
            intensity_noise_sigma=0.0, ghost_fraction=0.0,
        )


_SENSOR_FIELDS = {f.name: f for f in dataclasses.fields(SensorSpec)}


def _floats(value, n, key, lineno, source):
    try:
        vals = [float(v) for v in value.split()]
    except ValueError:
        raise ConfigError(f"{source}:{lineno}: non-numeric value for {key!r}") from None
    if len(vals) != n:
        raise ConfigError(f"{source}:{lineno}: {key!r} needs {n} numbers, got {len(vals)}")
    return vals


def parse_scene(text: str, source="<string>") -> tuple[SceneModel, SensorSpec]:
    scene = SceneModel(ground=False)
    sensor_kwargs = {}
    for key, value, lineno in parse_kv_text(text, repeatable={"patch", "box", "mover"}, source=source):
        if key == "ground":
            z, refl = _floats(value, 2, key, lineno, source)
            scene.ground, scene.ground_z, scene.ground_reflectivity = True, z, refl
        elif key == "patch":
            v = _floats(value, 10, key, lineno, source)
            scene.patches.append(Patch(tuple(v[0:3]), tuple(v[3:6]), tuple(v[6:9]), v[9]))
        elif key == "box":
            v = _floats(value, 7, key, lineno, source)
            scene.patches.extend(box_patches(v[0:3], v[3:6], v[6]))
        elif key == "mover":
            v = _floats(value, 10, key, lineno, source)
            scene.movers.append(Mover(tuple(v[0:3]), tuple(v[3:6]), tuple(v[6:9]), v[9]))
        elif key in _SENSOR_FIELDS:
            f = _SENSOR_FIELDS[key]
            try:
                num = float(value)
            except ValueError:
                raise ConfigError(f"{source}:{lineno}: non-numeric value for {key!r}") from None
            sensor_kwargs[key] = int(num) if f.type in ("int", int) else num
        else:
            raise ConfigError(f"{source}:{lineno}: unknown scene key {key!r}")
    return scene, SensorSpec(**sensor_kwargs)


def read_scene(path) -> tuple[SceneModel, SensorSpec]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scene {path}: {exc}") from None
    return parse_scene(text, source=str(path))


def format_scene(scene: SceneModel, sensor: Optional[SensorSpec] = None) -> str:
    g = lambda vals: " ".join(format(float(v), ".9g") for v in vals)
    lines = []
    if scene.ground:
        lines.append(f"ground = {g([scene.ground_z, scene.ground_reflectivity])}")
    for p in scene.patches:
        lines.append(f"patch = {g([*p.corner, *p.edge_a, *p.edge_b, p.reflectivity])}")
    for m in scene.movers:
        lines.append(f"mover = {g([*m.position, *m.velocity, *m.extent, m.reflectivity])}")
    if sensor is not None:
        for name in _SENSOR_FIELDS:
            lines.append(f"{name} = {getattr(sensor, name)}")
    return "\n".join(lines) + "\n"
