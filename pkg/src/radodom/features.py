"""Region-wise voxel features: weighted mean point, PCA normal, condition number."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.spatial import cKDTree

from .errors import UnusableFrameError
from .geometry import Pose
from .io import RadarScan

EIG_FLOOR = 1e-12


class VoxelKey(NamedTuple):
    ix: int
    iy: int
    iz: int


def voxel_keys(points, voxel_size: float) -> np.ndarray:
    return np.floor(np.asarray(points, dtype=float) / voxel_size).astype(np.int64)


def voxelize(points, voxel_size: float) -> dict[VoxelKey, np.ndarray]:
    """Bucket point indices by ``floor(p / voxel_size)``; keys come out sorted."""
    if voxel_size <= 0:
        raise ValueError("voxel_size must be positive")
    keys = voxel_keys(points, voxel_size).reshape(-1, 3)
    if len(keys) == 0:
        return {}
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    order = np.argsort(inverse, kind="stable")
    bounds = np.searchsorted(inverse[order], np.arange(len(uniq) + 1))
    return {
        VoxelKey(*map(int, k)): order[bounds[i]:bounds[i + 1]]
        for i, k in enumerate(uniq)
    }


def voxel_center(key, voxel_size: float) -> np.ndarray:
    return (np.asarray(key, dtype=float) + 0.5) * voxel_size


def gather_neighbors(centers, tree: cKDTree, radius: float) -> list[list[int]]:
    """Indices of points within ``radius`` (inclusive) of each query center."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    return [sorted(nb) for nb in tree.query_ball_point(centers, r=radius)]


def weighted_moments(points, intensities):
    """Intensity-weighted mean and reliability-weighted unbiased covariance.

    Weights are the intensities normalized over the neighborhood; all-zero
    intensities fall back to uniform weights.
    """
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    w = np.asarray(intensities, dtype=float).reshape(-1)
    total = w.sum()
    w = np.full(len(p), 1.0 / len(p)) if total <= 0 else w / total
    mean = w @ p
    d = p - mean
    cov = (d * w[:, None]).T @ d
    norm = 1.0 - np.sum(w**2)
    cov = cov / norm if norm > 0 else np.zeros((3, 3))
    return mean, 0.5 * (cov + cov.T)


def _orient(u):
    """Flip so the largest-magnitude component is positive."""
    return -u if u[np.argmax(np.abs(u))] < 0 else u


def pca_normal(cov):
    """Normal (smallest-eigenvalue eigenvector), eigenvalues desc, and kappa."""
    vals, vecs = np.linalg.eigh(np.asarray(cov, dtype=float))
    vals = np.clip(vals[::-1], 0.0, None)
    vecs = vecs[:, ::-1]
    u = _orient(vecs[:, 2])
    kappa = max(vals[0] / max(vals[2], EIG_FLOOR), 1.0)
    return u, vals, kappa, vecs


@dataclass(frozen=True)
class FeatureCell:
    key: VoxelKey
    mean: np.ndarray
    normal: np.ndarray
    eigenvalues: np.ndarray
    kappa: float
    n_points: int
    max_intensity: float
    is_intensity_peak: bool


@dataclass(frozen=True, eq=False)
class FeatureSet:
    """Column-wise store of feature cells, one row per voxel."""

    keys: np.ndarray
    means: np.ndarray
    normals: np.ndarray
    eigenvalues: np.ndarray
    kappa: np.ndarray
    n_points: np.ndarray
    max_intensity: np.ndarray
    is_peak: np.ndarray
    covariances: Optional[np.ndarray] = None
    axes: Optional[np.ndarray] = None
    timestamp: Optional[float] = None
    frame: str = "body"

    def __len__(self):
        return len(self.means)

    def cell(self, i) -> FeatureCell:
        return FeatureCell(
            VoxelKey(*map(int, self.keys[i])), self.means[i], self.normals[i],
            self.eigenvalues[i], float(self.kappa[i]), int(self.n_points[i]),
            float(self.max_intensity[i]), bool(self.is_peak[i]),
        )

    @property
    def cells(self) -> dict[VoxelKey, FeatureCell]:
        return {c.key: c for c in (self.cell(i) for i in range(len(self)))}

    def transformed(self, pose: Pose, frame: str = "world") -> "FeatureSet":
        """Means and normals expressed in the frame ``pose`` maps into."""
        normals = pose.rotate(self.normals)
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        covs = axes = None
        if self.covariances is not None:
            covs = pose.R @ self.covariances @ pose.R.T
        if self.axes is not None:
            axes = pose.R @ self.axes
        return FeatureSet(
            self.keys, pose.apply(self.means), normals, self.eigenvalues, self.kappa,
            self.n_points, self.max_intensity, self.is_peak, covs, axes, self.timestamp, frame,
        )

    def select(self, index) -> "FeatureSet":
        return FeatureSet(
            self.keys[index], self.means[index], self.normals[index], self.eigenvalues[index],
            self.kappa[index], self.n_points[index], self.max_intensity[index],
            self.is_peak[index],
            None if self.covariances is None else self.covariances[index],
            None if self.axes is None else self.axes[index],
            self.timestamp, self.frame,
        )


def extract_features(scan: RadarScan, config, w_thre: Optional[float] = None,
                     grid_pose: Optional[Pose] = None) -> FeatureSet:
    """Compute one feature cell per voxel with enough neighbors.

    ``w_thre`` overrides ``config.w_thre``; when both are unset no cell is
    promoted to its max-intensity point.

    The voxel grid is the scan's own body-frame grid unless ``grid_pose``
    (body -> world) is given: then keys index ``grid_pose.apply(p)`` and the
    neighborhoods are gathered around the world voxel centers mapped back into
    the body frame. Cells are expressed in the body frame either way.

    With ``config.trim_fov`` voxels whose neighborhood ball is cut by the
    scan's angular or range extent are dropped: their means are pulled inward
    from the cut, and since the cut moves with the sensor they would bias the
    motion estimate toward standing still.
    """
    if w_thre is None:
        w_thre = config.w_thre
    if w_thre is None:
        w_thre = math.inf
    pos = scan.positions
    inten = scan.intensity
    keys = unique_keys(pos if grid_pose is None else grid_pose.apply(pos), config.voxel_size)
    centers = (keys + 0.5) * config.voxel_size
    if grid_pose is not None:
        centers = grid_pose.inverse().apply(centers)
    if config.trim_fov:
        inside = within_scan_extent(centers, pos, config.neighborhood_radius)
        keys, centers = keys[inside], centers[inside]
    neighborhoods = cKDTree(pos).query_ball_point(centers, r=config.neighborhood_radius,
                                                  return_sorted=True)
    counts = np.fromiter((len(nb) for nb in neighborhoods), dtype=np.int64, count=len(keys))
    keep = np.flatnonzero(counts >= config.min_neighbors)
    if len(keep) == 0:
        raise UnusableFrameError(
            f"no voxel has >= {config.min_neighbors} neighbors ({len(scan)} points)"
        )
    counts = counts[keep]
    flat = np.concatenate([np.asarray(neighborhoods[i], dtype=np.int64) for i in keep])
    means, covs, peak_idx = _segment_moments(pos, inten, flat, counts)
    peak = inten[peak_idx] > w_thre
    means[peak] = pos[peak_idx[peak]]

    vals, vecs = np.linalg.eigh(covs)
    vals = np.clip(vals[:, ::-1], 0.0, None)
    vecs = vecs[:, :, ::-1]
    normals = vecs[:, :, 2].copy()
    flip = normals[np.arange(len(normals)), np.argmax(np.abs(normals), axis=1)] < 0
    normals[flip] *= -1.0
    vecs[flip, :, 2] *= -1.0
    kappa = np.maximum(vals[:, 0] / np.maximum(vals[:, 2], EIG_FLOOR), 1.0)
    return FeatureSet(
        keys=keys[keep],
        means=means,
        normals=normals,
        eigenvalues=vals,
        kappa=kappa,
        n_points=counts,
        max_intensity=inten[peak_idx].astype(float),
        is_peak=peak,
        covariances=covs,
        axes=vecs,
        timestamp=scan.timestamp,
    )


def _spherical(p):
    p = np.asarray(p, dtype=float).reshape(-1, 3)
    return (np.arctan2(p[:, 1], p[:, 0]), np.arctan2(p[:, 2], np.hypot(p[:, 0], p[:, 1])),
            np.linalg.norm(p, axis=1))


def within_scan_extent(centers, points, radius: float) -> np.ndarray:
    """Mask of balls (``centers``, ``radius``) inside the azimuth, elevation and
    range extent spanned by ``points``, all in the sensor frame."""
    az, el, r = _spherical(points)
    c_az, c_el, c_r = _spherical(centers)
    half = np.arcsin(np.clip(radius / np.maximum(c_r, 1e-12), 0.0, 1.0))
    return ((c_r > radius) & (c_r + radius <= r.max())
            & (c_az - half >= az.min()) & (c_az + half <= az.max())
            & (c_el - half >= el.min()) & (c_el + half <= el.max()))


def unique_keys(points, voxel_size: float) -> np.ndarray:
    """Sorted distinct voxel keys of ``points``, shape (k, 3)."""
    if voxel_size <= 0:
        raise ValueError("voxel_size must be positive")
    keys = voxel_keys(points, voxel_size).reshape(-1, 3)
    if len(keys) == 0:
        return keys
    return np.unique(keys, axis=0)


def _segment_moments(pos, inten, flat, counts):
    """:func:`weighted_moments` and first-max-intensity index for consecutive segments."""
    n_seg = len(counts)
    seg = np.repeat(np.arange(n_seg), counts)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    p = pos[flat]
    w = inten[flat].astype(float)
    total = np.bincount(seg, weights=w, minlength=n_seg)
    w = np.where(total[seg] > 0, w / np.where(total > 0, total, 1.0)[seg], 1.0 / counts[seg])
    means = np.stack([np.bincount(seg, weights=w * p[:, k], minlength=n_seg) for k in range(3)], axis=1)
    d = p - means[seg]
    wd = d * w[:, None]
    covs = np.empty((n_seg, 3, 3))
    for a in range(3):
        for b in range(a, 3):
            covs[:, a, b] = covs[:, b, a] = np.bincount(seg, weights=wd[:, a] * d[:, b], minlength=n_seg)
    norm = 1.0 - np.bincount(seg, weights=w * w, minlength=n_seg)
    covs = np.where((norm > 0)[:, None, None], covs / np.where(norm > 0, norm, 1.0)[:, None, None], 0.0)
    vmax = np.maximum.reduceat(inten[flat], starts)
    hits = np.flatnonzero(inten[flat] == vmax[seg])
    first = hits[np.unique(seg[hits], return_index=True)[1]]
    return means, covs, flat[first]


def intensity_threshold(scans, percentile: float = 99.0) -> float:
    """Intensity percentile pooled over ``scans`` (the automatic ``w_thre``)."""
    pooled = np.concatenate([s.intensity for s in scans])
    return float(np.percentile(pooled, percentile))
