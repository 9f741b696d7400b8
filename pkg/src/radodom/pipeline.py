"""Per-scan odometry: ego-velocity, dynamic removal, de-skew, features, registration.

The world frame is the pose of the first successfully processed scan. Each
subsequent scan is registered against a submap built from a sliding window of
keyframes, starting from a motion prior that combines the scan's own Doppler
ego-velocity with the rotation rate observed over the previous two poses.

Failure handling is total over the input stream:

* ego-velocity unavailable -> constant-velocity prior, all points kept;
* registration infeasible -> the prior is accepted as the pose;
* no usable features -> the frame is skipped (no pose for that timestamp).

Every case is flagged in the per-frame diagnostics.
"""

from __future__ import annotations

import logging
import time
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional

import numpy as np

from .config import OdomConfig
from .ego_velocity import EgoVelocityEstimate, estimate_ego_velocity, remove_dynamic
from .errors import PipelineError, RegistrationInfeasible, UnusableFrameError, VelocityUnavailable
from .features import FeatureSet, extract_features
from .geometry import Pose, Trajectory, constant_twist_motion, se3_exp, se3_log, so3_log
from .io import RadarScan
from .registration import Keyframe, build_submap, register_scan

log = logging.getLogger(__name__)


@dataclass
class OdometryState:
    window: deque = field(default_factory=deque)
    last_pose: Optional[Pose] = None
    last_velocity: Optional[EgoVelocityEstimate] = None
    last_timestamp: Optional[float] = None
    trajectory: Trajectory = field(default_factory=Trajectory)
    n_keyframes: int = 0


@dataclass
class FrameDiagnostics:
    timestamp: float
    n_points: int
    n_static: int = 0
    speed: Optional[float] = None
    n_features: int = 0
    n_corr: int = 0
    cost: Optional[float] = None
    flags: list = field(default_factory=list)
    runtime_s: float = 0.0

    def record(self) -> dict:
        return asdict(self)


def _previous_increment(state: OdometryState):
    """Body-frame motion between the last two poses and its duration, or None."""
    traj = state.trajectory
    if len(traj) < 2:
        return None
    a, b = traj[-2], traj[-1]
    return a.inverse() @ b, b.time - a.time


def angular_rate(state: OdometryState) -> np.ndarray:
    """Body angular velocity (rad/s) implied by the last two poses."""
    prev = _previous_increment(state)
    if prev is None:
        return np.zeros(3)
    inc, dt_prev = prev
    return so3_log(inc.R) / dt_prev


def predict_pose(state: OdometryState, ego_vel: Optional[EgoVelocityEstimate], dt: float) -> Pose:
    """Motion prior for a scan ``dt`` seconds after ``state.last_pose``.

    With an ego-velocity the body-frame increment is ``exp([dt v, dt w])`` with
    ``w`` the angular rate of the previous step; without one the whole previous
    twist is extrapolated. The identity increment is used before two poses exist.
    """
    if dt <= 0:
        raise PipelineError(f"prediction interval must be positive, got {dt}")
    if state.last_pose is None:
        return Pose.identity()
    prev = _previous_increment(state)
    if ego_vel is not None:
        phi = np.zeros(3) if prev is None else so3_log(prev[0].R) * (dt / prev[1])
        inc = se3_exp(np.concatenate([dt * ego_vel.v3, phi]))
    elif prev is not None:
        inc = se3_exp(se3_log(prev[0]) * (dt / prev[1]))
    else:
        inc = Pose.identity()
    return state.last_pose @ inc


def deskew(scan: RadarScan, ego_vel: Optional[EgoVelocityEstimate], angular_rate) -> RadarScan:
    """Express every point in the sensor frame at the scan timestamp.

    A point measured ``tau`` seconds after the stamp sits in the frame
    ``exp(tau [v, w])`` relative to the stamp frame, so it is mapped through
    that transform. No-op without per-point offsets or velocity.
    """
    if ego_vel is None or not scan.has_time_offsets:
        return scan
    omega = np.asarray(angular_rate, dtype=float)
    v = ego_vel.v3
    if not np.any(v) and not np.any(omega):
        return scan
    R, t = constant_twist_motion(scan.time_offset, v, omega)
    pos = np.einsum("nij,nj->ni", R, scan.positions) + t
    return scan.with_positions(pos)


def maybe_add_keyframe(state: OdometryState, pose: Pose, features: FeatureSet,
                       config: OdomConfig) -> bool:
    """Append a keyframe when far enough from the newest one; evict the oldest."""
    if state.window:
        rel = state.window[-1].pose.inverse() @ pose
        if (np.linalg.norm(rel.t) <= config.keyframe_trans_thresh
                and rel.angle <= config.keyframe_rot_thresh_rad):
            return False
    state.window.append(Keyframe(pose, features, state.n_keyframes))
    state.n_keyframes += 1
    while len(state.window) > config.window_size:
        state.window.popleft()
    return True


class Odometry:
    """Stateful scan-to-submap odometry over a stream of :class:`RadarScan`.

    When ``config.w_thre`` is unset the intensity promotion threshold is the
    configured percentile of the intensities seen so far, frozen once
    ``w_thre_calib_scans`` scans have been observed.
    """

    def __init__(self, config: Optional[OdomConfig] = None):
        self.config = config or OdomConfig()
        self.config.validate()
        self.state = OdometryState()
        self.diagnostics: list[FrameDiagnostics] = []
        self._calib: list[np.ndarray] = []
        self._w_thre = self.config.w_thre

    @property
    def trajectory(self) -> Trajectory:
        return self.state.trajectory

    @property
    def keyframes(self) -> int:
        return self.state.n_keyframes

    @property
    def skipped(self) -> int:
        return sum("skipped" in d.flags for d in self.diagnostics)

    def _intensity_threshold(self, scan: RadarScan) -> Optional[float]:
        if self.config.w_thre is not None:
            return self.config.w_thre
        if len(self._calib) < self.config.w_thre_calib_scans:
            self._calib.append(scan.intensity)
            self._w_thre = float(np.percentile(np.concatenate(self._calib),
                                               self.config.w_thre_percentile))
        return self._w_thre

    def process_scan(self, scan: RadarScan) -> Optional[Pose]:
        """Estimate the world pose of ``scan``; ``None`` when the frame is skipped."""
        cfg = self.config
        st = self.state
        if st.last_timestamp is not None and scan.timestamp <= st.last_timestamp:
            raise PipelineError(
                f"scan timestamp {scan.timestamp:.9f} is not after {st.last_timestamp:.9f}"
            )
        t_start = time.perf_counter()
        diag = FrameDiagnostics(scan.timestamp, len(scan))
        st.last_timestamp = scan.timestamp
        w_thre = self._intensity_threshold(scan)

        ego = None
        points = scan
        if cfg.use_ego_velocity:
            try:
                ego, labels = estimate_ego_velocity(scan, cfg)
                diag.n_static = ego.n_static
                diag.speed = ego.speed
                if cfg.remove_dynamic:
                    points = remove_dynamic(scan, labels)
            except VelocityUnavailable as exc:
                diag.flags.append("velocity_unavailable")
                log.debug("t=%.3f: %s", scan.timestamp, exc)
        else:
            diag.flags.append("velocity_disabled")

        if cfg.deskew:
            if ego is not None and points.has_time_offsets:
                points = deskew(points, ego, angular_rate(st))
            else:
                diag.flags.append("no_deskew")

        if st.last_pose is None:
            prior = Pose.identity(scan.timestamp)
        else:
            prior = predict_pose(st, ego, scan.timestamp - st.last_pose.time).with_time(scan.timestamp)
        try:
            features = extract_features(points, cfg, w_thre, grid_pose=prior)
        except UnusableFrameError as exc:
            diag.flags.append("skipped")
            log.info("t=%.3f: frame skipped: %s", scan.timestamp, exc)
            return self._finish(diag, t_start, None)
        diag.n_features = len(features)

        if st.last_pose is None:
            pose = prior
            diag.flags.append("first_frame")
        else:
            try:
                res, features = register_scan(points, build_submap(st.window), prior, cfg, w_thre)
                pose = res.pose.with_time(scan.timestamp)
                diag.n_corr = res.n_corr
                diag.cost = res.cost
                if res.diverged:
                    diag.flags.append("registration_diverged")
            except RegistrationInfeasible as exc:
                pose = prior
                diag.flags.append("registration_infeasible")
                log.info("t=%.3f: using motion prior: %s", scan.timestamp, exc)

        st.trajectory.append(pose)
        st.last_pose = pose
        st.last_velocity = ego
        if "registration_infeasible" not in diag.flags and maybe_add_keyframe(st, pose, features, cfg):
            diag.flags.append("keyframe")
        return self._finish(diag, t_start, pose)

    def _finish(self, diag, t_start, pose):
        diag.runtime_s = time.perf_counter() - t_start
        self.diagnostics.append(diag)
        return pose

    def run(self, scans: Iterable[RadarScan]) -> Trajectory:
        for scan in scans:
            self.process_scan(scan)
        return self.trajectory


def run_odometry(scans: Iterable[RadarScan], config: Optional[OdomConfig] = None) -> Odometry:
    """Convenience wrapper: process ``scans`` and return the finished :class:`Odometry`."""
    odom = Odometry(config)
    odom.run(scans)
    return odom
