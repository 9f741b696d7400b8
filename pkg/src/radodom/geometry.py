"""Rigid-body algebra on SE(3).

Conventions used throughout the package:

* A :class:`Pose` ``T = (R, t)`` maps body coordinates into the parent frame,
  ``p_parent = R @ p_body + t``.
* Tangent vectors are 6-vectors ``xi = [rho, phi]``: translational part first
  (meters), rotational part (axis-angle, radians) last.
* Increments compose on the left: ``T <- exp(xi) @ T``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import GeometryError

ORTHO_TOL = 1e-9
REORTHO_DRIFT = 1e-12
SMALL_ANGLE = 1e-8
LOG_ANGLE_LIMIT = np.pi - 1e-6


def hat(v):
    """Skew-symmetric matrix such that ``hat(a) @ b == cross(a, b)``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(m):
    return np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]]) * 0.5


def orthonormalize(R):
    """Nearest rotation matrix in the Frobenius sense."""
    u, _, vt = np.linalg.svd(R)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Pose:
    """Immutable SE(3) element with an optional timestamp (seconds)."""

    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))
    time: Optional[float] = None

    def __post_init__(self):
        R = _frozen(self.R)
        t = _frozen(self.t).reshape(3)
        if R.shape != (3, 3):
            raise GeometryError(f"rotation must be 3x3, got {R.shape}")
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise GeometryError("pose contains non-finite entries")
        if np.max(np.abs(R.T @ R - np.eye(3))) > ORTHO_TOL or abs(np.linalg.det(R) - 1.0) > ORTHO_TOL:
            raise GeometryError("rotation is not orthonormal with det +1")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)
        if self.time is not None:
            object.__setattr__(self, "time", float(self.time))

    @classmethod
    def identity(cls, time=None) -> "Pose":
        return cls(np.eye(3), np.zeros(3), time)

    @classmethod
    def from_matrix(cls, m, time=None) -> "Pose":
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3], m[:3, 3], time)

    @classmethod
    def from_quaternion(cls, q_xyzw, t, time=None) -> "Pose":
        R = Rotation.from_quat(np.asarray(q_xyzw, dtype=float)).as_matrix()
        return cls(R, t, time)

    def quaternion(self) -> np.ndarray:
        """Unit quaternion ``(qx, qy, qz, qw)`` with ``qw >= 0``."""
        q = Rotation.from_matrix(self.R).as_quat()
        return -q if q[3] < 0 else q

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.R
        m[:3, 3] = self.t
        return m

    def inverse(self) -> "Pose":
        return Pose(self.R.T, -self.R.T @ self.t, self.time)

    def compose(self, other: "Pose") -> "Pose":
        """Group product ``self * other``; keeps ``other``'s timestamp."""
        R = self.R @ other.R
        if np.max(np.abs(R.T @ R - np.eye(3))) > REORTHO_DRIFT:
            R = orthonormalize(R)
        time = other.time if other.time is not None else self.time
        return Pose(R, self.R @ other.t + self.t, time)

    __matmul__ = compose

    def apply(self, points) -> np.ndarray:
        """Transform a single point ``(3,)`` or an array ``(N, 3)``."""
        p = np.asarray(points, dtype=float)
        return p @ self.R.T + self.t

    def rotate(self, vectors) -> np.ndarray:
        return np.asarray(vectors, dtype=float) @ self.R.T

    def with_time(self, time) -> "Pose":
        return Pose(self.R, self.t, time)

    @property
    def angle(self) -> float:
        """Rotation angle in radians, in ``[0, pi]``."""
        return rotation_angle(self.R)

    def __repr__(self):
        return f"Pose(t={np.round(self.t, 6).tolist()}, angle={self.angle:.6g}, time={self.time})"


def compose(a: Pose, b: Pose) -> Pose:
    return a.compose(b)


def apply(T: Pose, p) -> np.ndarray:
    return T.apply(p)


def rotation_angle(R) -> float:
    s = np.linalg.norm(vee(R))
    c = (np.trace(R) - 1.0) * 0.5
    return float(np.arctan2(s, c))


def so3_exp(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi)
    K = hat(phi)
    if theta < SMALL_ANGLE:
        return np.eye(3) + K + 0.5 * K @ K
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / theta**2
    return np.eye(3) + a * K + b * K @ K


def so3_log(R) -> np.ndarray:
    theta = rotation_angle(R)
    if theta > LOG_ANGLE_LIMIT:
        raise GeometryError(f"rotation angle {theta:.9f} too close to pi for a stable log")
    w = vee(R)
    if theta < SMALL_ANGLE:
        return w * (1.0 + theta**2 / 6.0)
    return w * (theta / np.sin(theta))


def _left_jacobian(phi):
    theta = np.linalg.norm(phi)
    K = hat(phi)
    if theta < SMALL_ANGLE:
        return np.eye(3) + 0.5 * K + K @ K / 6.0
    b = (1.0 - np.cos(theta)) / theta**2
    c = (theta - np.sin(theta)) / theta**3
    return np.eye(3) + b * K + c * K @ K


def _left_jacobian_inv(phi):
    theta = np.linalg.norm(phi)
    K = hat(phi)
    if theta < SMALL_ANGLE:
        return np.eye(3) - 0.5 * K + K @ K / 12.0
    d = (1.0 - theta * np.sin(theta) / (2.0 * (1.0 - np.cos(theta)))) / theta**2
    return np.eye(3) - 0.5 * K + d * K @ K


def se3_exp(xi, time=None) -> Pose:
    """Exponential map of ``xi = [rho, phi]``."""
    xi = np.asarray(xi, dtype=float).reshape(6)
    rho, phi = xi[:3], xi[3:]
    return Pose(so3_exp(phi), _left_jacobian(phi) @ rho, time)


def se3_log(T: Pose) -> np.ndarray:
    """Inverse of :func:`se3_exp`; raises :class:`GeometryError` near angle pi."""
    phi = so3_log(T.R)
    rho = _left_jacobian_inv(phi) @ T.t
    return np.concatenate([rho, phi])


def constant_twist_motion(tau, v, omega):
    """Batched ``exp(tau_k [v, omega])`` for scalar times ``tau`` (n,).

    Returns rotation (n, 3, 3) and translation (n, 3) stacks of the motion
    under a constant body-frame twist (``v`` m/s, ``omega`` rad/s).
    """
    tau = np.asarray(tau, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float)
    omega = np.asarray(omega, dtype=float)
    n = len(tau)
    w = np.linalg.norm(omega)
    tv = tau[:, None] * v
    if w < 1e-12:
        return np.broadcast_to(np.eye(3), (n, 3, 3)).copy(), tv
    Kn = hat(omega / w)
    K2 = Kn @ Kn
    th = tau * w
    s, c = np.sin(th), np.cos(th)
    R = np.eye(3) + s[:, None, None] * Kn + (1 - c)[:, None, None] * K2
    big = np.abs(th) > 1e-8
    safe = np.where(big, th, 1.0)
    a = np.where(big, (1 - c) / safe, th / 2)
    b = np.where(big, (th - s) / safe, th**2 / 6)
    t = tv + a[:, None] * (tv @ Kn.T) + b[:, None] * (tv @ K2.T)
    return R, t


def rz(angle, t=(0.0, 0.0, 0.0), time=None) -> Pose:
    """Rotation about +z by ``angle`` radians followed by translation ``t``."""
    c, s = np.cos(angle), np.sin(angle)
    return Pose(np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]), t, time)


def yaw_of(R) -> float:
    return float(np.arctan2(R[1, 0], R[0, 0]))


class Trajectory(Sequence):
    """Ordered poses with strictly increasing timestamps."""

    def __init__(self, poses: Iterable[Pose] = ()):
        self._poses: list[Pose] = []
        for p in poses:
            self.append(p)

    def append(self, pose: Pose):
        if pose.time is None:
            raise GeometryError("trajectory poses need timestamps")
        if self._poses and not pose.time > self._poses[-1].time:
            raise GeometryError(
                f"timestamps must be strictly increasing ({pose.time!r} after {self._poses[-1].time!r})"
            )
        self._poses.append(pose)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return Trajectory(self._poses[i])
        return self._poses[i]

    def __len__(self):
        return len(self._poses)

    def __iter__(self) -> Iterator[Pose]:
        return iter(self._poses)

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([p.time for p in self._poses], dtype=float)

    @property
    def positions(self) -> np.ndarray:
        return np.array([p.t for p in self._poses], dtype=float).reshape(-1, 3)

    def path_length(self) -> float:
        if len(self) < 2:
            return 0.0
        return float(np.linalg.norm(np.diff(self.positions, axis=0), axis=1).sum())

    def transformed(self, T: Pose) -> "Trajectory":
        """Left-multiply every pose by ``T`` (change of world frame)."""
        return Trajectory(T @ p for p in self._poses)

    def __repr__(self):
        return f"Trajectory(n={len(self)})"
