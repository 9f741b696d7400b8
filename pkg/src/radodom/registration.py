"""Weighted robust point-to-point registration of feature cells to a submap.

The objective over the scan pose ``T`` (body -> submap frame) is::

    F(T) = sum_i w_i * L(|e_i|^2),    e_i = m_i - T p_i

with ``p_i`` a scan feature point, ``m_i`` its associated submap point,
``w_i`` the similarity weight of the pair and ``L`` the Huber function
applied to the squared residual norm. Increments are left-multiplied,
``T <- exp(xi) T``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy.spatial import cKDTree

from .errors import RegistrationInfeasible
from .io import RadarScan
from .features import FeatureSet, extract_features
from .geometry import Pose, se3_exp

STEP_HALVINGS = 5
TRANS_TOL = 1e-4
ROT_TOL = 1e-5
DIVERGENCE_PATIENCE = 3
COARSE_TRANS_TOL = 1e-2
COARSE_ROT_TOL = 1e-3
COARSE_PATIENCE = 2


@dataclass(frozen=True, eq=False)
class Keyframe:
    pose: Pose
    features: FeatureSet
    id: int


@dataclass(frozen=True, eq=False)
class Submap:
    """Union of keyframe cells in the submap (world) frame."""

    means: np.ndarray
    normals: np.ndarray
    kappa: np.ndarray
    n_points: np.ndarray
    source: np.ndarray

    def __len__(self):
        return len(self.means)

    @cached_property
    def tree(self) -> cKDTree:
        return cKDTree(self.means)


def build_submap(keyframes) -> Submap:
    keyframes = list(keyframes)
    if not keyframes:
        raise ValueError("submap needs at least one keyframe")
    parts = [kf.features.transformed(kf.pose) for kf in keyframes]
    return Submap(
        means=np.concatenate([p.means for p in parts]),
        normals=np.concatenate([p.normals for p in parts]),
        kappa=np.concatenate([p.kappa for p in parts]),
        n_points=np.concatenate([p.n_points for p in parts]),
        source=np.concatenate([np.full(len(p), kf.id) for p, kf in zip(parts, keyframes)]),
    )


def pair_weight(n_a, kappa_a, count_a, n_b, kappa_b, count_b):
    """Similarity of normals, condition numbers and point counts, in (0, 3]."""
    n_a = np.asarray(n_a, dtype=float)
    n_b = np.asarray(n_b, dtype=float)
    w_vec = np.clip(np.abs(np.sum(n_a * n_b, axis=-1)), 0.0, 1.0)
    k_a, k_b = np.asarray(kappa_a, dtype=float), np.asarray(kappa_b, dtype=float)
    c_a, c_b = np.asarray(count_a, dtype=float), np.asarray(count_b, dtype=float)
    w_con = np.minimum(k_a, k_b) / np.maximum(k_a, k_b)
    w_num = np.minimum(c_a, c_b) / np.maximum(c_a, c_b)
    return w_vec + w_con + w_num


def huber(s, delta):
    """Huber function of ``s`` (here a squared norm) and its derivative."""
    s = np.asarray(s, dtype=float)
    quad = s <= delta
    loss = np.where(quad, 0.5 * s**2, delta * (s - 0.5 * delta))
    dloss = np.where(quad, s, delta)
    return loss, dloss


@dataclass(frozen=True)
class Correspondences:
    scan_idx: np.ndarray
    map_idx: np.ndarray
    weight: np.ndarray

    def __len__(self):
        return len(self.scan_idx)


def associate(scan: FeatureSet, submap: Submap, T_est: Pose, assoc_radius: float,
              z_thre: float) -> Correspondences:
    """Nearest submap cell within ``assoc_radius`` per scan cell, normal-gated."""
    if assoc_radius <= 0:
        raise ValueError("assoc_radius must be positive")
    pts = T_est.apply(scan.means)
    normals = T_est.rotate(scan.normals)
    dist, idx = submap.tree.query(pts, k=1, distance_upper_bound=np.nextafter(assoc_radius, np.inf))
    found = np.isfinite(dist) & (dist <= assoc_radius)
    s_idx = np.flatnonzero(found)
    m_idx = idx[found]
    dots = np.abs(np.sum(normals[s_idx] * submap.normals[m_idx], axis=1))
    keep = dots >= z_thre
    s_idx, m_idx = s_idx[keep], m_idx[keep]
    if len(s_idx) == 0:
        raise RegistrationInfeasible("no correspondences between scan and submap")
    w = pair_weight(
        normals[s_idx], scan.kappa[s_idx], scan.n_points[s_idx],
        submap.normals[m_idx], submap.kappa[m_idx], submap.n_points[m_idx],
    )
    return Correspondences(s_idx, m_idx, w)


def objective(T: Pose, src, dst, weights, delta) -> float:
    e = dst - T.apply(src)
    loss, _ = huber(np.sum(e**2, axis=1), delta)
    return float(weights @ loss)


def objective_and_gradient(T: Pose, src, dst, weights, delta):
    """Objective and its gradient w.r.t. a left increment ``xi = [rho, phi]``."""
    p = T.apply(src)
    e = dst - p
    s = np.sum(e**2, axis=1)
    loss, dloss = huber(s, delta)
    # de/drho = -I, de/dphi = hat(p)  =>  hat(p)^T e = e x p
    coef = (2.0 * weights * dloss)[:, None]
    g_rho = -np.sum(coef * e, axis=0)
    g_phi = np.sum(coef * np.cross(e, p), axis=0)
    return float(weights @ loss), np.concatenate([g_rho, g_phi])


def _hat_rows(p):
    z = np.zeros(len(p))
    x, y, w = p[:, 0], p[:, 1], p[:, 2]
    return np.stack([
        np.stack([z, -w, y], axis=1),
        np.stack([w, z, -x], axis=1),
        np.stack([-y, x, z], axis=1),
    ], axis=1)


def _residuals(T, src, dst, proj=None, T_ref=None):
    """Residuals ``dst - T src`` and the moved points ``T src``.

    With ``proj`` the scan cells are treated as re-gridded around ``T_ref``:
    a cell mean then follows the scan only along ``proj`` (its surface
    normal), so the residual is ``dst - T_ref src - proj (T src - T_ref src)``.
    """
    q = T.apply(src)
    if proj is None:
        return dst - q, q
    q_ref = T_ref.apply(src)
    return dst - q_ref - np.einsum("nij,nj->ni", proj, q - q_ref), q


def _cost(T, src, dst, weights, delta, proj=None, T_ref=None):
    e, _ = _residuals(T, src, dst, proj, T_ref)
    loss, _ = huber(np.sum(e**2, axis=1), delta)
    return float(weights @ loss)


def _normal_equations(T, src, dst, weights, delta, proj=None, T_ref=None):
    e, p = _residuals(T, src, dst, proj, T_ref)
    s = np.sum(e**2, axis=1)
    quad = (s <= delta).astype(float)
    dloss = np.where(quad > 0, s, delta)
    J = np.zeros((len(p), 3, 6))
    J[:, :, :3] = -np.eye(3)
    J[:, :, 3:] = _hat_rows(p)
    if proj is not None:
        J = proj @ J
    # per-residual curvature of w L(|e|^2): w (2 L' I + 4 L'' e e^T)
    W = (2.0 * weights * dloss)[:, None, None] * np.eye(3)
    W = W + (4.0 * weights * quad)[:, None, None] * (e[:, :, None] * e[:, None, :])
    Jt = np.transpose(J, (0, 2, 1))
    H = np.sum(Jt @ W @ J, axis=0)
    g = np.einsum("nij,nj->i", Jt, (2.0 * weights * dloss)[:, None] * e)
    return H, g


def gauss_newton(T: Pose, src, dst, weights, delta, max_iters=10, proj=None):
    """Damped Gauss-Newton on fixed correspondences. Returns (T, cost, iters, converged).

    ``proj`` (n, 3, 3), when given, linearizes the residuals of re-gridded
    scan cells around the starting pose (see :func:`_residuals`); the returned
    cost is then that of the linearized model.
    """
    T_ref = T
    cost = _cost(T, src, dst, weights, delta, proj, T_ref)
    for it in range(1, max_iters + 1):
        H, g = _normal_equations(T, src, dst, weights, delta, proj, T_ref)
        if not np.any(g):
            return T, cost, it, True
        H = H + np.eye(6) * (1e-12 * max(np.trace(H), 1e-12))
        step = -np.linalg.solve(H, g)
        accepted = False
        for _ in range(STEP_HALVINGS + 1):
            T_new = se3_exp(step) @ T
            new_cost = _cost(T_new, src, dst, weights, delta, proj, T_ref)
            if new_cost <= cost:
                accepted = True
                break
            step = 0.5 * step
        if not accepted:
            return T, cost, it, True
        T, cost = T_new, new_cost
        if np.linalg.norm(step[:3]) < TRANS_TOL and np.linalg.norm(step[3:]) < ROT_TOL:
            return T, cost, it, True
    return T, cost, max_iters, False


def normal_projectors(scan: FeatureSet, T: Pose) -> np.ndarray:
    """Per-cell ``n n^T`` of the world-frame normals; identity for intensity peaks.

    A cell re-gridded on a fixed world grid is the weighted mean of the scan
    surface inside a fixed ball, which slides along the surface as the scan
    moves and only follows it along the normal. A promoted peak is a single
    return and follows the scan fully.
    """
    n = T.rotate(scan.normals)
    proj = n[:, :, None] * n[:, None, :]
    proj[np.asarray(scan.is_peak, dtype=bool)] = np.eye(3)
    return proj


@dataclass
class RegistrationResult:
    pose: Pose
    cost: float
    n_corr: int
    iterations: int
    outer_iterations: int
    converged: bool
    diverged: bool = False
    history: list = field(default_factory=list)


def register(scan: FeatureSet, submap: Submap, T_init: Pose, config,
             refeature: Optional[Callable[[Pose], FeatureSet]] = None) -> RegistrationResult:
    """Iterate association and robust Gauss-Newton from ``T_init``.

    The association radius starts at ``config.association_radius``. Whenever an
    outer iteration moves the pose by less than the coarse tolerances, or after
    ``COARSE_PATIENCE`` iterations at one radius, the radius shrinks by
    ``config.assoc_shrink``, down to
    ``config.association_radius_min``: the wide gate gives a large basin of
    convergence, the narrow one keeps far-off pairs (which the Huber-in-``s``
    loss weights heavily) out of the final estimate. Termination requires the
    floor radius and a step below ``TRANS_TOL`` / ``ROT_TOL``.

    Raises :class:`RegistrationInfeasible` when ``T_init`` yields no
    correspondence. Iterates at the floor radius are ranked by cost per unit
    correspondence weight, since the number of pairs changes as the pose moves.

    ``refeature(T)``, when given, recomputes the scan cells for the estimate
    ``T`` before every re-association (see :func:`register_scan`), and each
    Gauss-Newton solve uses the normal-projected linearization of
    :func:`normal_projectors`: with fixed cells the tangential residuals would
    hold the pose in place, since re-gridding resets them on every pass.
    """
    if len(scan) == 0:
        raise ValueError("scan feature set is empty")
    delta = config.huber_delta
    r_min = config.association_radius_min
    radius = config.association_radius
    T = T_init
    corr = associate(scan, submap, T, radius, config.z_thre)

    def normalized(cost, c):
        return cost / float(np.sum(c.weight))

    init_cost = objective(T, scan.means[corr.scan_idx], submap.means[corr.map_idx], corr.weight, delta)
    history = []
    best = RegistrationResult(T, init_cost, len(corr), 0, 0, False, False, history)
    best_score = last_score = np.inf
    worse_streak = 0
    at_radius = 0
    total_iters = 0
    for outer in range(1, config.max_outer_iters + 1):
        if outer > 1:
            if refeature is not None:
                scan = refeature(T)
            try:
                corr = associate(scan, submap, T, radius, config.z_thre)
            except RegistrationInfeasible:
                best.diverged = True
                break
        src = scan.means[corr.scan_idx]
        dst = submap.means[corr.map_idx]
        proj = None if refeature is None else normal_projectors(scan, T)[corr.scan_idx]
        T_prev = T
        T, cost, iters, _ = gauss_newton(T, src, dst, corr.weight, delta, config.max_gn_iters, proj)
        total_iters += iters
        score = normalized(cost, corr)
        history.append(score)
        moved = T @ T_prev.inverse()
        step_t, step_r = float(np.linalg.norm(moved.t)), moved.angle
        if radius > r_min:
            # coarse stage: follow the iterate; shrink the gate once it settles
            best = RegistrationResult(T, cost, len(corr), total_iters, outer, False, False, history)
            at_radius += 1
            if (step_t < COARSE_TRANS_TOL and step_r < COARSE_ROT_TOL) or at_radius >= COARSE_PATIENCE:
                radius = max(radius * config.assoc_shrink, r_min)
                at_radius = 0
            continue
        if score < best_score:
            best_score = score
            best = RegistrationResult(T, cost, len(corr), total_iters, outer, False, False, history)
        worse_streak = worse_streak + 1 if score >= last_score else 0
        last_score = score
        if step_t < TRANS_TOL and step_r < ROT_TOL:
            best.converged = True
            break
        if worse_streak >= DIVERGENCE_PATIENCE:
            best.diverged = True
            break
    best.iterations = total_iters
    best.outer_iterations = outer
    return best


def register_scan(scan: RadarScan, submap: Submap, T_init: Pose, config,
                  w_thre=None) -> tuple[RegistrationResult, FeatureSet]:
    """Register raw scan points with the voxel grid anchored in the submap frame.

    Cell means are projections of voxel centers onto the local surface, so two
    feature sets computed on differently offset grids disagree tangentially by
    the grid offset, and point-to-point matching pulls the pose toward grid
    alignment. Here the scan is re-voxelized on the submap grid at the current
    estimate before every association, which makes the true pose a fixed point
    whenever the submap cells were computed the same way.

    Returns the result and the scan cells gridded at the returned pose, ready
    to be stored as a keyframe.
    """
    def refeature(T):
        return extract_features(scan, config, w_thre, grid_pose=T)

    result = register(refeature(T_init), submap, T_init, config, refeature)
    return result, refeature(result.pose)
