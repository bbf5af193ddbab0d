"""SE(3) algebra and closed-form rigid point-set registration.

Conventions used throughout the package:

* A ``RigidTransform`` maps points from its source frame to its target
  frame via ``p_target = R @ p_source + t``.
* Translations are millimeters, rotations are dimensionless 3x3 matrices.
* Euler angles are intrinsic ZYX (yaw-pitch-roll) and only appear at the
  reporting boundary, in degrees.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometry, GimbalLock, LengthMismatch

_ORTHO_TOL = 1e-9


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class RigidTransform:
    """Rigid body transform: ``p_out = rotation @ p_in + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if r.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {r.shape}")
        err = np.linalg.norm(r.T @ r - np.eye(3))
        if err > 1e-6 or abs(np.linalg.det(r) - 1.0) > 1e-6:
            raise ValueError("rotation is not a proper orthonormal matrix")
        if err > _ORTHO_TOL:
            r = orthonormalize(r)
        object.__setattr__(self, "rotation", _as_readonly(r))
        object.__setattr__(self, "translation", _as_readonly(t))

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> "RigidTransform":
        m = np.asarray(m, dtype=float).reshape(4, 4)
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_flat(cls, values) -> "RigidTransform":
        """Build from 16 row-major numbers (the serialization format)."""
        return cls.from_matrix(np.asarray(values, dtype=float).reshape(4, 4))

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def as_flat(self) -> list[float]:
        return [float(v) for v in self.as_matrix().ravel()]

    def apply(self, points) -> np.ndarray:
        """Apply to one 3-vector or an (N, 3) array of points."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return compose(self, other)


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Transform applying ``b`` first, then ``a``."""
    r = a.rotation @ b.rotation
    err = np.linalg.norm(r.T @ r - np.eye(3))
    if err > _ORTHO_TOL:
        r = orthonormalize(r)
    return RigidTransform(r, a.rotation @ b.translation + a.translation)


def invert(t: RigidTransform) -> RigidTransform:
    rt = t.rotation.T
    return RigidTransform(rt, -rt @ t.translation)


def apply(t: RigidTransform, points) -> np.ndarray:
    return t.apply(points)


def orthonormalize(r: np.ndarray) -> np.ndarray:
    """Nearest proper rotation in the Frobenius sense (via SVD)."""
    u, _, vt = np.linalg.svd(r)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


# --- axis-angle / quaternion helpers ----------------------------------------

def skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotation_from_axis_angle(axis, angle_rad: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        return np.eye(3)
    a = axis / n
    k = skew(a)
    s, c = np.sin(angle_rad), np.cos(angle_rad)
    return np.eye(3) + s * k + (1.0 - c) * (k @ k)


def axis_angle_from_rotation(r: np.ndarray) -> tuple[np.ndarray, float]:
    """Rotation axis (unit) and angle in [0, pi]."""
    q = quat_from_rotation(r)
    w = min(1.0, max(-1.0, q[0]))
    angle = 2.0 * np.arccos(w)
    s = np.linalg.norm(q[1:])
    if s < 1e-12:
        return np.array([1.0, 0.0, 0.0]), 0.0
    return q[1:] / s, float(angle)


def quat_from_rotation(r: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) with w >= 0."""
    m = np.asarray(r, dtype=float)
    tr = np.trace(m)
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array([0.25 * s,
                      (m[2, 1] - m[1, 2]) / s,
                      (m[0, 2] - m[2, 0]) / s,
                      (m[1, 0] - m[0, 1]) / s])
    else:
        i = int(np.argmax(np.diag(m)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(0.0, 1.0 + m[i, i] - m[j, j] - m[k, k])) * 2.0
        q = np.empty(4)
        q[0] = (m[k, j] - m[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (m[j, i] + m[i, j]) / s
        q[1 + k] = (m[k, i] + m[i, k]) / s
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def rotation_from_quat(q) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def geodesic_angle(ra: np.ndarray, rb: np.ndarray) -> float:
    """Geodesic distance between two rotations, radians."""
    _, angle = axis_angle_from_rotation(ra @ rb.T)
    return angle


# --- Euler (reporting only) --------------------------------------------------

@dataclass(frozen=True)
class EulerRPY:
    """Roll/pitch/yaw in degrees, intrinsic ZYX: R = Rz(yaw) Ry(pitch) Rx(roll)."""

    roll: float
    pitch: float
    yaw: float


def rotation_from_rpy(e: EulerRPY) -> np.ndarray:
    r, p, y = np.deg2rad([e.roll, e.pitch, e.yaw])
    cr, sr = np.cos(r), np.sin(r)
    cp, sp = np.cos(p), np.sin(p)
    cy, sy = np.cos(y), np.sin(y)
    rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1.0]])
    ry = np.array([[cp, 0, sp], [0, 1.0, 0], [-sp, 0, cp]])
    rx = np.array([[1.0, 0, 0], [0, cr, -sr], [0, sr, cr]])
    return rz @ ry @ rx


def rpy_from_rotation(r: np.ndarray) -> EulerRPY:
    """ZYX extraction. Raises GimbalLock within 1e-6 deg of pitch = +/-90."""
    m = np.asarray(r, dtype=float)
    sp = -m[2, 0]
    sp = min(1.0, max(-1.0, sp))
    pitch = np.rad2deg(np.arcsin(sp))
    if abs(abs(pitch) - 90.0) < 1e-6:
        raise GimbalLock(f"pitch {pitch:.9f} deg is within 1e-6 of +/-90")
    roll = np.rad2deg(np.arctan2(m[2, 1], m[2, 2]))
    yaw = np.rad2deg(np.arctan2(m[1, 0], m[0, 0]))
    return EulerRPY(float(roll), float(pitch), float(yaw))


# --- rigid point-set registration --------------------------------------------

def umeyama_fit(src, dst) -> RigidTransform:
    """Least-squares rigid fit: minimizes sum ||dst_i - (R src_i + t)||^2.

    No scale estimation. Requires >= 3 non-collinear correspondences.
    """
    src = np.asarray(src, dtype=float).reshape(-1, 3)
    dst = np.asarray(dst, dtype=float).reshape(-1, 3)
    if len(src) != len(dst):
        raise LengthMismatch(f"{len(src)} source vs {len(dst)} destination points")
    if len(src) < 3:
        raise DegenerateGeometry("need at least 3 correspondences")
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    cs = src - mu_s
    cd = dst - mu_d
    # collinear/coincident if the centered source has rank < 2
    sv = np.linalg.svd(cs, compute_uv=False)
    if sv[1] <= 1e-9 * max(1.0, sv[0]):
        raise DegenerateGeometry("source points are collinear or coincident")
    cov = cd.T @ cs / len(src)
    u, _, vt = np.linalg.svd(cov)
    d = np.sign(np.linalg.det(u @ vt))
    rot = u @ np.diag([1.0, 1.0, d]) @ vt
    return RigidTransform(orthonormalize(rot), mu_d - rot @ mu_s)


def fit_rms(t: RigidTransform, src, dst) -> float:
    """RMS residual of a rigid fit over the given correspondences."""
    res = np.asarray(dst, dtype=float) - t.apply(src)
    return float(np.sqrt(np.mean(np.sum(res ** 2, axis=1))))
