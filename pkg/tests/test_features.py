import dataclasses

import numpy as np
import pytest
from scipy.spatial import cKDTree

from radodom.config import OdomConfig
from radodom.errors import UnusableFrameError
from radodom.features import extract_features, gather_neighbors, pca_normal, voxelize, weighted_moments
from radodom.geometry import Pose, rz
from radodom.io import RadarScan
from radodom.sim import SensorSpec, simulate_scan
from radodom.sim.scene import Patch, SceneModel


def _scan(rng, n=400):
    return RadarScan(0.0, rng.uniform(-4, 4, (n, 3)), np.zeros(n), rng.uniform(0.1, 2.0, n))


def test_voxelize_examples():
    buckets = voxelize([[0.1, 0.1, 0.1], [0.2, 0.2, 0.2], [-0.1, 0, 0]], 1.0)
    assert list(buckets[(0, 0, 0)]) == [0, 1]
    assert list(buckets[(-1, 0, 0)]) == [2]
    with pytest.raises(ValueError):
        voxelize([[0, 0, 0]], 0.0)


def test_voxelize_partitions(rng):
    pts = rng.uniform(-10, 10, (1000, 3))
    buckets = voxelize(pts, 1.5)
    allidx = np.concatenate(list(buckets.values()))
    assert len(allidx) == 1000 and len(set(allidx.tolist())) == 1000
    for key, idx in buckets.items():
        np.testing.assert_array_equal(np.floor(pts[idx] / 1.5), np.tile(key, (len(idx), 1)))


def test_gather_neighbors_matches_linear_scan(rng):
    pts = rng.uniform(-5, 5, (1000, 3))
    queries = rng.uniform(-5, 5, (50, 3))
    got = gather_neighbors(queries, cKDTree(pts), 1.3)
    for q, nb in zip(queries, got):
        expected = np.flatnonzero(np.linalg.norm(pts - q, axis=1) <= 1.3)
        assert nb == expected.tolist()


def test_gather_neighbors_edges():
    pts = np.array([[0.0, 0, 0], [1.0, 0, 0], [3.0, 0, 0]])
    tree = cKDTree(pts)
    assert gather_neighbors([[0.0, 0, 0]], tree, 0.0) == [[0]]
    assert gather_neighbors([[0.0, 0, 0]], tree, 1.0) == [[0, 1]]


def test_weighted_moments_examples(rng):
    mean, _ = weighted_moments([[0, 0, 0], [4, 0, 0]], [1, 3])
    assert mean[0] == pytest.approx(3.0)
    _, cov = weighted_moments(np.ones((6, 3)), rng.uniform(0.5, 1, 6))
    np.testing.assert_allclose(cov, 0.0, atol=1e-15)
    pts = rng.normal(size=(100, 3))
    mean, cov = weighted_moments(pts, np.full(100, 0.7))
    np.testing.assert_allclose(mean, pts.mean(axis=0), atol=1e-12)
    np.testing.assert_allclose(cov, np.cov(pts.T), atol=1e-12)
    mean0, cov0 = weighted_moments(pts, np.zeros(100))
    np.testing.assert_allclose(cov0, np.cov(pts.T), atol=1e-12)


def test_weighted_cov_is_symmetric_psd(rng):
    pts, w = rng.normal(size=(30, 3)), rng.uniform(0, 5, 30)
    _, cov = weighted_moments(pts, w)
    np.testing.assert_allclose(cov, cov.T, atol=1e-12)
    assert np.linalg.eigvalsh(cov).min() >= -1e-12


def test_pca_normal_examples(rng):
    u, vals, kappa, _ = pca_normal(np.diag([4.0, 2.0, 1.0]))
    np.testing.assert_allclose(u, [0, 0, 1])
    np.testing.assert_allclose(vals, [4, 2, 1])
    assert kappa == pytest.approx(4.0)
    plane = np.column_stack([rng.uniform(-1, 1, (200, 2)), np.zeros(200)])
    u, vals, kappa, _ = pca_normal(np.cov(plane.T))
    np.testing.assert_allclose(u, [0, 0, 1], atol=1e-12)
    assert vals[2] < 1e-15 and kappa > 1e10
    cloud = rng.normal(size=(10_000, 3))
    assert 1.0 <= pca_normal(np.cov(cloud.T))[2] <= 1.3


def test_pca_sign_rule():
    u, *_ = pca_normal(np.diag([3.0, 2.0, 1.0]) * -1 + 4 * np.eye(3))  # smallest along x
    np.testing.assert_allclose(u, [1, 0, 0])


def two_walls_scan(seed=0, n=4000):
    scene = SceneModel([
        Patch((20.0, -15.0, 0.0), (0.0, 30.0, 0.0), (0.0, 0.0, 6.0)),  # wall x = 20
        Patch((-5.0, 8.0, 0.0), (25.0, 0.0, 0.0), (0.0, 0.0, 6.0)),  # wall y = 8
    ])
    return simulate_scan(scene, Pose(np.eye(3), (0, 0, 1.0), 0.0), (0, 0, 0), (0, 0, 0),
                         SensorSpec(points_per_scan=n).noise_free(), seed)[0]


def test_two_walls_normals():
    feats = extract_features(two_walls_scan(), OdomConfig())
    m, n = feats.means, feats.normals
    # one voxel clear of the corner, the wall tops and the ground
    inner = (m[:, 2] > 1.0) & (m[:, 2] < 5.0)
    on_x = inner & (np.abs(m[:, 0] - 20) < 0.3) & (np.abs(m[:, 1]) < 14) & (m[:, 1] < 7)
    on_y = inner & (np.abs(m[:, 1] - 8) < 0.3) & (m[:, 0] > -4) & (m[:, 0] < 19)
    assert on_x.sum() >= 10 and on_y.sum() >= 10
    assert np.degrees(np.arccos(min(np.abs(n[on_x, 0]).min(), 1.0))) < 2.0
    assert np.degrees(np.arccos(min(np.abs(n[on_y, 1]).min(), 1.0))) < 2.0


def test_too_sparse_is_unusable():
    scan = RadarScan(0.0, [[5, 0, 0], [5, 0.1, 0], [5, 0, 0.1]], np.zeros(3), np.ones(3))
    with pytest.raises(UnusableFrameError):
        extract_features(scan, OdomConfig(trim_fov=False))


def test_w_thre_extremes(rng):
    scan = _scan(rng)
    cfg = OdomConfig(trim_fov=False)
    none = extract_features(scan, cfg, w_thre=np.inf)
    assert not none.is_peak.any()
    every = extract_features(scan, cfg, w_thre=0.0)
    assert every.is_peak.all()
    # promotion swaps the point but keeps the neighborhood normal
    np.testing.assert_array_equal(every.normals, none.normals)
    assert np.all(np.isin(every.means.view([("", float)] * 3), scan.positions.view([("", float)] * 3)))


def test_eigen_reconstruction(rng):
    feats = extract_features(_scan(rng), OdomConfig(trim_fov=False))
    recon = np.einsum("nik,nk,njk->nij", feats.axes, feats.eigenvalues, feats.axes)
    np.testing.assert_allclose(recon, feats.covariances, atol=1e-9)
    np.testing.assert_allclose(np.linalg.norm(feats.normals, axis=1), 1.0, atol=1e-12)


def test_count_monotone_in_min_neighbors(rng):
    scan = _scan(rng)
    counts = [len(extract_features(scan, OdomConfig(trim_fov=False, min_neighbors=k))) for k in (1, 2, 3, 4, 5)]
    assert counts == sorted(counts, reverse=True)


def test_deterministic():
    scan = two_walls_scan(seed=3, n=2000)
    a, b = extract_features(scan, OdomConfig()), extract_features(scan, OdomConfig())
    for f in dataclasses.fields(a):
        x, y = getattr(a, f.name), getattr(b, f.name)
        if isinstance(x, np.ndarray):
            assert x.tobytes() == y.tobytes()
        else:
            assert x == y


def test_rotation_equivariance_90_degrees(rng):
    scan = _scan(rng, 600)
    R = rz(np.pi / 2)
    rotated = RadarScan(0.0, R.apply(scan.positions), scan.doppler, scan.intensity)
    cfg = OdomConfig(trim_fov=False)
    a, b = extract_features(scan, cfg), extract_features(rotated, cfg)
    assert len(a) == len(b)
    # voxel (ix, iy, iz) maps to (-iy - 1, ix, iz) under the rotation
    mapped = {(-int(k[1]) - 1, int(k[0]), int(k[2])): i for i, k in enumerate(a.keys)}
    for j, k in enumerate(b.keys):
        i = mapped[tuple(int(v) for v in k)]
        np.testing.assert_allclose(b.means[j], R.apply(a.means[i]), atol=1e-9)
        expected = R.rotate(a.normals[i])
        assert abs(abs(expected @ b.normals[j]) - 1.0) < 1e-6 or a.kappa[i] > 1e6
