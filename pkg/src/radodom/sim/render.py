"""Ray-cast rendering of a single radar scan with Doppler and intensity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import SimulationError
from ..geometry import Pose, constant_twist_motion
from ..io import RadarScan
from .scene import SceneModel, SensorSpec

STATIC, DYNAMIC, GHOST = 0, 1, 2
MIN_HIT = 0.05
GHOST_MAX_DOPPLER = 20.0


@dataclass(frozen=True)
class ScanTruth:
    labels: np.ndarray  # STATIC / DYNAMIC / GHOST per point
    mover: np.ndarray  # mover index, -1 if none
    radial_margin: np.ndarray  # |v_mover . ray| for mover points, else 0
    velocity_body: np.ndarray  # sensor velocity in its body frame at the scan timestamp
    pose: Pose


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _ray_patches(origin, dirs, scene: SceneModel):
    """Nearest patch hit distance and patch index per ray (inf / -1 on miss)."""
    n = len(dirs)
    if not scene.patches:
        return np.full(n, np.inf), np.full(n, -1)
    C = np.array([p.corner for p in scene.patches], dtype=float)
    A = np.array([p.edge_a for p in scene.patches], dtype=float)
    B = np.array([p.edge_b for p in scene.patches], dtype=float)
    N = np.cross(A, B)
    N /= np.linalg.norm(N, axis=1, keepdims=True)
    E = np.stack([A, B], axis=2)  # (M, 3, 2)
    G = np.linalg.pinv(E)  # (M, 2, 3)
    g1, g2 = G[:, 0, :], G[:, 1, :]
    denom = dirs @ N.T
    with np.errstate(divide="ignore", invalid="ignore"):
        num = np.sum(C * N, axis=1)[None, :] - origin @ N.T
        t = num / denom
        ok = (np.abs(denom) > 1e-12) & (t > MIN_HIT)
        a = origin @ g1.T - np.sum(C * g1, axis=1)[None, :] + t * (dirs @ g1.T)
        b = origin @ g2.T - np.sum(C * g2, axis=1)[None, :] + t * (dirs @ g2.T)
    ok &= (a >= 0) & (a <= 1) & (b >= 0) & (b <= 1)
    t = np.where(ok, t, np.inf)
    j = np.argmin(t, axis=1)
    t_best = t[np.arange(n), j]
    return t_best, np.where(np.isfinite(t_best), j, -1)


def _ray_movers(origin, dirs, times, scene: SceneModel):
    n = len(dirs)
    best_t = np.full(n, np.inf)
    best_id = np.full(n, -1)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / np.where(dirs == 0, 1e-300, dirs)
        for k, m in enumerate(scene.movers):
            center = np.asarray(m.position) + np.outer(times, m.velocity)
            half = 0.5 * np.asarray(m.extent, dtype=float)
            t1 = (center - half - origin) * inv
            t2 = (center + half - origin) * inv
            tmin = np.minimum(t1, t2).max(axis=1)
            tmax = np.maximum(t1, t2).min(axis=1)
            hit = (tmax >= tmin) & (tmin > MIN_HIT)
            closer = hit & (tmin < best_t)
            best_t[closer] = tmin[closer]
            best_id[closer] = k
    return best_t, best_id


def sample_directions(n, spec: SensorSpec, rng):
    az = np.radians(rng.uniform(-0.5 * spec.fov_azimuth, 0.5 * spec.fov_azimuth, n))
    el = np.radians(rng.uniform(-0.5 * spec.fov_elevation, 0.5 * spec.fov_elevation, n))
    ce = np.cos(el)
    return np.column_stack([ce * np.cos(az), ce * np.sin(az), np.sin(el)])


def simulate_scan(scene: SceneModel, pose: Pose, velocity, angular_rate, spec: SensorSpec,
                  rng_seed=0) -> tuple[RadarScan, ScanTruth]:
    """Render one scan taken from ``pose`` (sensor -> world, time = scan stamp).

    ``velocity`` is the sensor's world-frame velocity and ``angular_rate`` its
    body-frame rate (rad/s); both are held constant over ``scan_duration``.
    Each ray gets a uniform time offset in ``[0, scan_duration]`` and is cast
    from the sensor pose at that instant.
    """
    rng = _rng(rng_seed)
    t0 = 0.0 if pose.time is None else pose.time
    v_body = pose.R.T @ np.asarray(velocity, dtype=float)
    omega = np.asarray(angular_rate, dtype=float)
    n = spec.points_per_scan

    d_body = sample_directions(n, spec, rng)
    tau = rng.uniform(0.0, spec.scan_duration, n) if spec.scan_duration > 0 else np.zeros(n)
    dR, dt = constant_twist_motion(tau, v_body, omega)
    R_ray = pose.R @ dR  # (n, 3, 3)
    origin = dt @ pose.R.T + pose.t
    dirs = np.einsum("nij,nj->ni", R_ray, d_body)
    sensor_vel = np.einsum("nij,j->ni", R_ray, v_body)

    t_hit, patch_id = _ray_patches(origin, dirs, scene)
    if scene.ground:
        with np.errstate(divide="ignore", invalid="ignore"):
            tg = (scene.ground_z - origin[:, 2]) / dirs[:, 2]
        tg = np.where((dirs[:, 2] < 0) & (tg > MIN_HIT), tg, np.inf)
    else:
        tg = np.full(n, np.inf)
    ground_hit = tg < t_hit
    t_static = np.minimum(t_hit, tg)
    t_mov, mov_id = _ray_movers(origin, dirs, t0 + tau, scene)
    is_mover = t_mov < t_static
    t_final = np.where(is_mover, t_mov, t_static)
    ok = t_final <= spec.max_range

    refl = np.where(ground_hit, scene.ground_reflectivity, 0.0)
    if scene.patches:
        pr = np.array([p.reflectivity for p in scene.patches])
        refl = np.where(ground_hit | (patch_id < 0), refl, pr[np.maximum(patch_id, 0)])
    if scene.movers:
        mr = np.array([m.reflectivity for m in scene.movers])
        refl = np.where(is_mover, mr[np.maximum(mov_id, 0)], refl)

    idx = np.flatnonzero(ok)
    rng_true = t_final[idx]
    rng_meas = np.maximum(rng_true + rng.normal(0.0, spec.range_noise_sigma, len(idx)), MIN_HIT)
    positions = d_body[idx] * rng_meas[:, None]

    v_target = np.zeros((len(idx), 3))
    movers = np.where(is_mover[idx], mov_id[idx], -1)
    for k, m in enumerate(scene.movers):
        v_target[movers == k] = m.velocity
    ray = dirs[idx]
    doppler = spec.doppler_sign * np.sum((v_target - sensor_vel[idx]) * ray, axis=1)
    doppler = doppler + rng.normal(0.0, spec.doppler_noise_sigma, len(idx))
    intensity = refl[idx] * (spec.nominal_range / rng_true) ** 2
    intensity = np.maximum(intensity * (1.0 + rng.normal(0.0, spec.intensity_noise_sigma, len(idx))), 0.0)
    margin = np.abs(np.sum(v_target * ray, axis=1))
    labels = np.where(movers >= 0, DYNAMIC, STATIC)
    offsets = tau[idx]

    n_ghost = int(round(spec.ghost_fraction * len(idx)))
    if n_ghost:
        gd = sample_directions(n_ghost, spec, rng)
        gr = rng.uniform(2.0, spec.max_range, n_ghost)
        positions = np.vstack([positions, gd * gr[:, None]])
        doppler = np.concatenate([doppler, rng.uniform(-GHOST_MAX_DOPPLER, GHOST_MAX_DOPPLER, n_ghost)])
        intensity = np.concatenate([intensity, rng.uniform(0.0, 0.2, n_ghost) * (spec.nominal_range / gr) ** 2])
        offsets = np.concatenate([offsets, rng.uniform(0.0, spec.scan_duration, n_ghost)])
        labels = np.concatenate([labels, np.full(n_ghost, GHOST)])
        movers = np.concatenate([movers, np.full(n_ghost, -1)])
        margin = np.concatenate([margin, np.zeros(n_ghost)])

    if len(positions) == 0:
        raise SimulationError("no visible geometry within range and field of view")
    scan = RadarScan(t0, positions, doppler, intensity, offsets)
    truth = ScanTruth(labels, movers, margin, v_body, pose)
    return scan, truth
