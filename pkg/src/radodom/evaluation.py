"""Trajectory accuracy metrics: ATE after rigid alignment, RPE, KITTI-style drift.

All functions are pure. Pose pairs are ``(estimate, ground_truth)`` tuples of
:class:`~radodom.geometry.Pose` produced by :func:`associate_by_time`.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import AssociationError
from .geometry import Pose, Trajectory, rotation_angle

DEFAULT_LENGTHS = (10.0, 20.0, 50.0)
DEFAULT_SPEED_EDGES = (0.0, 5.0, 10.0, 15.0, 20.0)


@dataclass(frozen=True)
class PosePairs:
    est: list
    gt: list
    n_unpaired: int = 0

    def __len__(self):
        return len(self.est)

    def positions(self):
        return (np.array([p.t for p in self.est]).reshape(-1, 3),
                np.array([p.t for p in self.gt]).reshape(-1, 3))


def associate_by_time(est: Trajectory, gt: Trajectory, max_dt: float = 0.05) -> PosePairs:
    """Pair each estimated pose with the nearest-in-time ground-truth pose."""
    if len(est) == 0 or len(gt) == 0:
        raise AssociationError("both trajectories must be non-empty")
    t_gt = gt.timestamps
    t_est = est.timestamps
    hi = np.searchsorted(t_gt, t_est)
    lo = np.clip(hi - 1, 0, len(t_gt) - 1)
    hi = np.clip(hi, 0, len(t_gt) - 1)
    j = np.where(np.abs(t_gt[lo] - t_est) <= np.abs(t_gt[hi] - t_est), lo, hi)
    ok = np.abs(t_gt[j] - t_est) <= max_dt
    if not np.any(ok):
        raise AssociationError(
            f"no estimated pose lies within {max_dt} s of a ground-truth pose"
        )
    idx = np.flatnonzero(ok)
    return PosePairs([est[i] for i in idx], [gt[int(j[i])] for i in idx], int(len(ok) - ok.sum()))


def align_rigid(est_positions, gt_positions, allow_degenerate: bool = False) -> Pose:
    """Least-squares ``(R, t)`` with ``gt ~ R est + t`` (no scale, det R = +1).

    Collinear estimates leave the rotation about their line undetermined and
    raise, unless ``allow_degenerate``: then one of the minimizers is returned,
    which is all :func:`ate_rmse` needs.
    """
    e = np.asarray(est_positions, dtype=float).reshape(-1, 3)
    g = np.asarray(gt_positions, dtype=float).reshape(-1, 3)
    if len(e) != len(g):
        raise ValueError("position sets differ in length")
    if len(e) < 3:
        raise AssociationError("rigid alignment needs at least 3 pairs")
    mu_e, mu_g = e.mean(axis=0), g.mean(axis=0)
    E, G = e - mu_e, g - mu_g
    scale = max(np.abs(E).max(), np.abs(G).max(), 1e-300)
    sv = np.linalg.svd(E / scale, compute_uv=False)
    if sv[1] < 1e-9 * max(sv[0], 1e-300) and not allow_degenerate:
        raise AssociationError("positions are collinear; rigid alignment is ill-posed")
    U, _, Vt = np.linalg.svd(G.T @ E)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt)) or 1.0])
    R = U @ D @ Vt
    return Pose(R, mu_g - R @ mu_e)


def ate_rmse(pairs: PosePairs, alignment: Optional[Pose] = None) -> float:
    """RMSE of ``|g - (R e + t)|``; pass ``alignment=None`` to skip alignment."""
    e, g = pairs.positions()
    if alignment is not None:
        e = alignment.apply(e)
    return float(np.sqrt(np.mean(np.sum((g - e) ** 2, axis=1))))


def _relative_error(pairs: PosePairs, i: int, j: int) -> Pose:
    d_gt = pairs.gt[i].inverse() @ pairs.gt[j]
    d_est = pairs.est[i].inverse() @ pairs.est[j]
    return d_gt.inverse() @ d_est


def rpe(pairs: PosePairs, delta: int = 1) -> tuple[float, float]:
    """Translation (m) and rotation (rad) RMSE over pose pairs ``delta`` frames apart."""
    if delta < 1:
        raise ValueError("delta must be >= 1")
    n = len(pairs)
    if n < delta + 1:
        raise AssociationError(f"RPE with delta {delta} needs at least {delta + 1} pairs, got {n}")
    errs = [_relative_error(pairs, i, i + delta) for i in range(n - delta)]
    trans = np.array([np.linalg.norm(E.t) for E in errs])
    rot = np.array([rotation_angle(E.R) for E in errs])
    return float(np.sqrt(np.mean(trans**2))), float(np.sqrt(np.mean(rot**2)))


def rpe_per_meter(pairs: PosePairs, delta: int = 1) -> tuple[float, float]:
    """RPE normalized by the ground-truth distance of each step (m/m, rad/m)."""
    n = len(pairs)
    if n < delta + 1:
        raise AssociationError(f"RPE with delta {delta} needs at least {delta + 1} pairs, got {n}")
    t, r, dist = [], [], []
    for i in range(n - delta):
        E = _relative_error(pairs, i, i + delta)
        d = float(np.linalg.norm(pairs.gt[i + delta].t - pairs.gt[i].t))
        if d > 1e-9:
            t.append(np.linalg.norm(E.t) / d)
            r.append(rotation_angle(E.R) / d)
    if not t:
        return 0.0, 0.0
    return float(np.sqrt(np.mean(np.square(t)))), float(np.sqrt(np.mean(np.square(r))))


def _cumulative_length(poses) -> np.ndarray:
    p = np.array([x.t for x in poses]).reshape(-1, 3)
    return np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(p, axis=0), axis=1))])


def _spans(pairs: PosePairs, length: float):
    """(start, end) index pairs where the gt path length first exceeds ``length``."""
    dist = _cumulative_length(pairs.gt)
    ends = np.searchsorted(dist, dist + length, side="right")
    return [(i, int(e)) for i, e in enumerate(ends) if e < len(dist)]


def relative_error_by_length(pairs: PosePairs, lengths: Sequence[float] = DEFAULT_LENGTHS) -> dict:
    """Mean translational error over spans of each length, in percent of the length."""
    out = {}
    for L in lengths:
        spans = _spans(pairs, L)
        if spans:
            errs = [np.linalg.norm(_relative_error(pairs, i, j).t) / L for i, j in spans]
            out[float(L)] = 100.0 * float(np.mean(errs))
    return out


def relative_error_by_speed(pairs: PosePairs, length: float = DEFAULT_LENGTHS[0],
                            edges: Sequence[float] = DEFAULT_SPEED_EDGES) -> dict:
    """Relative error (%) over ``length``-meter spans bucketed by mean gt speed.

    Keys are bucket lower edges (m/s); speeds above the last edge fall in the
    last bucket.
    """
    dist = _cumulative_length(pairs.gt)
    times = np.array([p.time for p in pairs.gt], dtype=float)
    buckets: dict = {}
    for i, j in _spans(pairs, length):
        dt = times[j] - times[i]
        if not dt > 0:
            continue
        speed = (dist[j] - dist[i]) / dt
        k = max(int(np.searchsorted(edges, speed, side="right")) - 1, 0)
        err = np.linalg.norm(_relative_error(pairs, i, j).t) / length
        buckets.setdefault(float(edges[k]), []).append(err)
    return {k: 100.0 * float(np.mean(v)) for k, v in sorted(buckets.items())}


@dataclass
class MetricReport:
    ate_rmse: float
    rpe_trans: float
    rpe_rot: float
    rpe_trans_per_m: float
    rpe_rot_per_m: float
    by_length: dict = field(default_factory=dict)
    by_speed: dict = field(default_factory=dict)
    n_pairs: int = 0
    n_unpaired: int = 0
    rpe_delta: int = 1

    def rows(self):
        rows = [
            ("ate_rmse", "m", self.ate_rmse),
            (f"rpe_trans_delta{self.rpe_delta}", "m/frame", self.rpe_trans),
            (f"rpe_rot_delta{self.rpe_delta}", "deg/frame", np.degrees(self.rpe_rot)),
            (f"rpe_trans_delta{self.rpe_delta}_per_m", "m/m", self.rpe_trans_per_m),
            (f"rpe_rot_delta{self.rpe_delta}_per_m", "deg/m", np.degrees(self.rpe_rot_per_m)),
        ]
        rows += [(f"rel_err_{L:g}m", "%", v) for L, v in self.by_length.items()]
        rows += [(f"rel_err_speed_{s:g}mps", "%", v) for s, v in self.by_speed.items()]
        return rows

    def to_text(self) -> str:
        lines = [f"pairs: {self.n_pairs} (unpaired {self.n_unpaired})"]
        lines += [f"{name:<28} {value:12.6f} {unit}" for name, unit, value in self.rows()]
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "unit", "value"])
        for name, unit, value in self.rows():
            w.writerow([name, unit, f"{value:.9g}"])
        return buf.getvalue()


def evaluate(est: Trajectory, gt: Trajectory, rpe_delta: int = 1,
             lengths: Sequence[float] = DEFAULT_LENGTHS, max_dt: float = 0.05,
             align: bool = True) -> MetricReport:
    pairs = associate_by_time(est, gt, max_dt)
    e, g = pairs.positions()
    alignment = align_rigid(e, g, allow_degenerate=True) if align else None
    rt, rr = rpe(pairs, rpe_delta)
    rtm, rrm = rpe_per_meter(pairs, rpe_delta)
    return MetricReport(
        ate_rmse=ate_rmse(pairs, alignment),
        rpe_trans=rt, rpe_rot=rr, rpe_trans_per_m=rtm, rpe_rot_per_m=rrm,
        by_length=relative_error_by_length(pairs, lengths),
        by_speed=relative_error_by_speed(pairs, min(lengths) if lengths else DEFAULT_LENGTHS[0]),
        n_pairs=len(pairs), n_unpaired=pairs.n_unpaired, rpe_delta=rpe_delta,
    )
