"""Planar ego-velocity from per-point Doppler, with dynamic-point removal.

For a stationary reflector the radial Doppler is the projection of the sensor
velocity onto the ray. Scaling each point's planar unit direction by its
(planar) radial speed yields a sample ``q``; all static samples lie on a
circle through the origin whose diameter vector is the planar ego-velocity.
Moving objects land on other circles and form separate dense groups, which
DBSCAN in ``q``-space separates from the dominant static group.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .clustering import NOISE, cluster_sizes, dbscan
from .errors import DegenerateGeometryError, UnusableFrameError, VelocityUnavailable
from .io import RadarScan

STATIONARY_EPS = 1e-6
MAX_NORMAL_COND = 1e8


@dataclass(frozen=True)
class DopplerSamples:
    """Planar Doppler samples ``q`` (M, 2) and the scan index of each."""

    q: np.ndarray
    index: np.ndarray

    def __len__(self):
        return len(self.q)

    def subset(self, mask) -> "DopplerSamples":
        return DopplerSamples(self.q[mask], self.index[mask])


@dataclass(frozen=True)
class EgoVelocityEstimate:
    v_xy: np.ndarray
    n_static: int
    rms_residual: float

    @property
    def speed(self) -> float:
        return float(np.hypot(*self.v_xy))

    @property
    def v3(self) -> np.ndarray:
        """Body-frame 3D velocity with the vertical component fixed at zero."""
        return np.array([self.v_xy[0], self.v_xy[1], 0.0])


@dataclass(frozen=True)
class ClusterLabels:
    """Per-scan-point cluster ids (``-1`` noise) and the chosen static cluster."""

    labels: np.ndarray
    static_cluster: int
    sizes: dict = field(default_factory=dict)

    @property
    def static_mask(self) -> np.ndarray:
        return self.labels == self.static_cluster

    @property
    def n_clusters(self) -> int:
        return len(self.sizes)


def project_doppler(scan: RadarScan, doppler_sign: int = 1, min_xy_range: float = 0.1,
                    elevation_correction: bool = True) -> DopplerSamples:
    """Map each point to its planar Doppler sample ``q``.

    ``q = (-doppler_sign * d) * (x, y) / |(x, y)|``; with
    ``elevation_correction`` the radial speed is first divided by the cosine
    of the elevation angle so elevated static points (ground, tall walls) also
    fall on the circle. Points closer than ``min_xy_range`` to the z axis are
    skipped.
    """
    pos = scan.positions
    rxy = np.hypot(pos[:, 0], pos[:, 1])
    keep = rxy >= min_xy_range
    if not np.any(keep):
        raise DegenerateGeometryError("no point has usable planar range for Doppler projection")
    idx = np.flatnonzero(keep)
    p = pos[keep]
    rxy = rxy[keep]
    radial = -doppler_sign * scan.doppler[keep]
    if elevation_correction:
        radial = radial * (np.linalg.norm(p, axis=1) / rxy)
    q = (radial / rxy)[:, None] * p[:, :2]
    return DopplerSamples(q, idx)


def gaussian_prefilter(samples: DopplerSamples, k_sigma: float = 3.0) -> DopplerSamples:
    """Drop samples whose ``|q|`` lies more than ``k_sigma`` std from the mean.

    At least half of the samples (rounded up) always survive: if the gate
    would remove more, the half closest to the mean is kept instead.
    """
    n = len(samples)
    if n < 3:
        return samples
    mag = np.linalg.norm(samples.q, axis=1)
    dev = np.abs(mag - mag.mean())
    sigma = mag.std()
    if sigma == 0.0:
        return samples
    keep = dev <= k_sigma * sigma
    floor = math.ceil(n / 2)
    if keep.sum() < floor:
        order = np.argsort(dev, kind="stable")[:floor]
        keep = np.zeros(n, dtype=bool)
        keep[order] = True
    return samples.subset(keep)


def fit_circle_fixed_axis(q, axis=1) -> float:
    """Radius of the origin circle whose center lies on a fixed axis.

    Least squares on the algebraic residual ``|q|^2 - 2 r (q . a)``;
    ``axis`` is a component index or an explicit direction ``a``.
    """
    q = np.asarray(q, dtype=float).reshape(-1, 2)
    if len(q) < 1:
        raise DegenerateGeometryError("fixed-axis fit needs samples")
    a = np.eye(2)[axis] if np.isscalar(axis) else np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    along = q @ a
    denom = 2.0 * np.sum(along**2)
    if denom / 2.0 < 1e-12:
        raise DegenerateGeometryError("samples carry no component along the circle axis")
    return float(np.sum(np.sum(q**2, axis=1) * along) / denom)


def _circle_rms(q, center, v_norm):
    res = np.sum(q**2, axis=1) - 2.0 * q @ center
    return float(np.sqrt(np.mean(res**2)) / max(v_norm, 1.0))


def fit_circle_general(q) -> EgoVelocityEstimate:
    """Algebraic (Kasa) fit of a circle through the origin with free center.

    Solves ``(sum q q^T) c = 1/2 sum |q|^2 q``; the ego-velocity is ``2 c``.
    """
    q = np.asarray(q, dtype=float).reshape(-1, 2)
    n = len(q)
    if n and np.all(np.linalg.norm(q, axis=1) < STATIONARY_EPS):
        return EgoVelocityEstimate(np.zeros(2), n, 0.0)
    if n < 3:
        raise DegenerateGeometryError(f"circle fit needs >= 3 samples, got {n}")
    A = q.T @ q
    sq = np.sum(q**2, axis=1)
    b = 0.5 * (sq @ q)
    if np.linalg.cond(A) >= MAX_NORMAL_COND:
        raise DegenerateGeometryError("Doppler samples are collinear through the origin")
    c = np.linalg.solve(A, b)
    v = 2.0 * c
    return EgoVelocityEstimate(v, n, _circle_rms(q, c, np.hypot(*v)))


def _pick_static(q, labels):
    sizes = cluster_sizes(labels)
    if not sizes:
        return None, sizes
    best = max(sizes.values())
    tied = [cid for cid, s in sizes.items() if s == best]
    if len(tied) == 1:
        return tied[0], sizes
    scores = []
    for cid in tied:
        try:
            scores.append(fit_circle_general(q[labels == cid]).rms_residual)
        except DegenerateGeometryError:
            scores.append(math.inf)
    return tied[int(np.argmin(scores))], sizes


def estimate_ego_velocity(scan: RadarScan, config) -> tuple[EgoVelocityEstimate, ClusterLabels]:
    """Project, prefilter, cluster and fit; raises :class:`VelocityUnavailable`."""
    try:
        samples = project_doppler(scan, config.doppler_sign, config.min_xy_range)
    except DegenerateGeometryError as exc:
        raise VelocityUnavailable(str(exc)) from exc
    samples = gaussian_prefilter(samples, config.gaussian_k_sigma)
    sample_labels = dbscan(samples.q, config.dbscan_eps, config.dbscan_min_pts)
    static, sizes = _pick_static(samples.q, sample_labels)
    if static is None:
        raise VelocityUnavailable("DBSCAN found no cluster in Doppler space")
    q_static = samples.q[sample_labels == static]
    if len(q_static) < config.min_static:
        raise VelocityUnavailable(
            f"static cluster has {len(q_static)} samples, need {config.min_static}"
        )
    try:
        if config.fit_mode == "fixed_axis":
            r = fit_circle_fixed_axis(q_static, axis=0)
            c = np.array([r, 0.0])
            est = EgoVelocityEstimate(2.0 * c, len(q_static), _circle_rms(q_static, c, 2.0 * abs(r)))
        else:
            est = fit_circle_general(q_static)
    except DegenerateGeometryError as exc:
        raise VelocityUnavailable(str(exc)) from exc
    labels = np.full(len(scan), NOISE, dtype=int)
    labels[samples.index] = sample_labels
    return est, ClusterLabels(labels, static, sizes)


def remove_dynamic(scan: RadarScan, labels: ClusterLabels) -> RadarScan:
    """Keep only points of the static cluster; the input scan is not modified."""
    if len(labels.labels) != len(scan):
        raise ValueError("labels do not cover the scan")
    mask = labels.static_mask
    if not np.any(mask):
        raise UnusableFrameError("no static points left after dynamic removal")
    return scan.subset(mask)


# -- comparators -------------------------------------------------------------

def _radial_system(scan, doppler_sign):
    pos = scan.positions
    r = np.linalg.norm(pos, axis=1)
    A = pos[:, :2] / r[:, None]
    y = -doppler_sign * scan.doppler
    return A, y


def naive_ego_velocity(scan: RadarScan, doppler_sign: int = 1) -> EgoVelocityEstimate:
    """Ordinary least squares of radial Doppler over every point, no clustering."""
    A, y = _radial_system(scan, doppler_sign)
    v, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ v
    return EgoVelocityEstimate(v, len(y), float(np.sqrt(np.mean(res**2))))


def ransac_ego_velocity(scan: RadarScan, doppler_sign: int = 1, threshold: float = 0.3,
                        iterations: int = 100, seed: int = 0) -> EgoVelocityEstimate:
    """RANSAC over 2-point planar hypotheses followed by a least-squares refit."""
    A, y = _radial_system(scan, doppler_sign)
    n = len(y)
    if n < 2:
        raise DegenerateGeometryError("RANSAC needs at least 2 points")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(iterations):
        i, j = rng.choice(n, size=2, replace=False)
        M = A[[i, j]]
        if abs(np.linalg.det(M)) < 1e-6:
            continue
        v = np.linalg.solve(M, y[[i, j]])
        inliers = np.abs(y - A @ v) < threshold
        if best is None or inliers.sum() > best.sum():
            best = inliers
    if best is None or best.sum() < 2:
        raise DegenerateGeometryError("RANSAC found no consistent hypothesis")
    v, *_ = np.linalg.lstsq(A[best], y[best], rcond=None)
    res = y[best] - A[best] @ v
    return EgoVelocityEstimate(v, int(best.sum()), float(np.sqrt(np.mean(res**2))))
