"""Estimation core: planar PnP, 3D-3D registration, and AX=XB hand-eye.

Pose conventions: H_ci and H_oi map board-world (CW) coordinates into the
sensor frame; the hand-eye result X maps sensor coordinates into the
end-effector frame G, so that H_gi @ X @ H_sensor_i is the fixed board
pose for every configuration i.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (DegenerateConfiguration, DegenerateGeometry,
                     InsufficientMotion, NonConvergence)
from .geom import (RigidTransform, axis_angle_from_rotation, compose,
                   fit_rms, invert, orthonormalize, quat_from_rotation,
                   skew, umeyama_fit)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera with radial-tangential distortion (k1 k2 p1 p2 k3)."""

    fx: float
    fy: float
    cx: float
    cy: float
    distortion: np.ndarray = field(default_factory=lambda: np.zeros(5))

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        d = np.asarray(self.distortion, dtype=float).reshape(5).copy()
        d.flags.writeable = False
        object.__setattr__(self, "distortion", d)

    def _distort_normalized(self, xy: np.ndarray) -> np.ndarray:
        k1, k2, p1, p2, k3 = self.distortion
        x, y = xy[:, 0], xy[:, 1]
        r2 = x * x + y * y
        radial = 1.0 + k1 * r2 + k2 * r2 ** 2 + k3 * r2 ** 3
        xd = x * radial + 2 * p1 * x * y + p2 * (r2 + 2 * x * x)
        yd = y * radial + p1 * (r2 + 2 * y * y) + 2 * p2 * x * y
        return np.column_stack([xd, yd])

    def project(self, points_cam) -> np.ndarray:
        """Camera-frame mm points (N, 3) to distorted pixels (N, 2)."""
        p = np.asarray(points_cam, dtype=float).reshape(-1, 3)
        xy = p[:, :2] / p[:, 2:3]
        xd = self._distort_normalized(xy)
        return np.column_stack([self.fx * xd[:, 0] + self.cx,
                                self.fy * xd[:, 1] + self.cy])

    def undistort_pixels(self, pixels, iterations: int = 10) -> np.ndarray:
        """Remove lens distortion by fixed-point inversion; returns pixels."""
        px = np.asarray(pixels, dtype=float).reshape(-1, 2)
        xd = np.column_stack([(px[:, 0] - self.cx) / self.fx,
                              (px[:, 1] - self.cy) / self.fy])
        xy = xd.copy()
        for _ in range(iterations):
            delta = self._distort_normalized(xy) - xy
            xy = xd - delta
        return np.column_stack([self.fx * xy[:, 0] + self.cx,
                                self.fy * xy[:, 1] + self.cy])


@dataclass(frozen=True)
class PosePair:
    """Robot pose H_gi (G to RW) with the matching sensor pose (CW to sensor)."""

    robot_pose: RigidTransform
    sensor_pose: RigidTransform


# --- homography ---------------------------------------------------------------

def fit_homography(src, dst) -> np.ndarray:
    """Normalized DLT homography mapping src (N, 2) onto dst (N, 2), N >= 4."""
    src = np.asarray(src, dtype=float).reshape(-1, 2)
    dst = np.asarray(dst, dtype=float).reshape(-1, 2)
    if len(src) < 4 or len(src) != len(dst):
        raise DegenerateConfiguration("homography needs >= 4 correspondences")

    def normalize(p):
        mu = p.mean(axis=0)
        scale = np.sqrt(2.0) / max(1e-12, np.mean(np.linalg.norm(p - mu, axis=1)))
        t = np.array([[scale, 0, -scale * mu[0]],
                      [0, scale, -scale * mu[1]],
                      [0, 0, 1.0]])
        return (p - mu) * scale, t

    sn, ts = normalize(src)
    dn, td = normalize(dst)
    a = np.zeros((2 * len(src), 9))
    a[0::2, 0:2] = sn
    a[0::2, 2] = 1.0
    a[0::2, 6:8] = -dn[:, 0:1] * sn
    a[0::2, 8] = -dn[:, 0]
    a[1::2, 3:5] = sn
    a[1::2, 5] = 1.0
    a[1::2, 6:8] = -dn[:, 1:2] * sn
    a[1::2, 8] = -dn[:, 1]
    _, sv, vt = np.linalg.svd(a)
    if sv[-2] <= 1e-12 * sv[0]:
        raise DegenerateConfiguration("homography system is rank deficient")
    h = vt[-1].reshape(3, 3)
    h = np.linalg.inv(td) @ h @ ts
    return h / h[2, 2]


def apply_homography(h: np.ndarray, points) -> np.ndarray:
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    q = np.column_stack([p, np.ones(len(p))]) @ h.T
    return q[:, :2] / q[:, 2:3]


# --- planar PnP ---------------------------------------------------------------

def _check_planar_points(obj: np.ndarray) -> None:
    if len(obj) < 4:
        raise DegenerateConfiguration("planar PnP needs >= 4 points")
    centered = obj[:, :2] - obj[:, :2].mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[1] <= 1e-9 * max(1.0, sv[0]):
        raise DegenerateConfiguration("object points are collinear")


def _pose_from_planar_homography(h: np.ndarray) -> RigidTransform:
    h1, h2, h3 = h[:, 0], h[:, 1], h[:, 2]
    scale = 2.0 / (np.linalg.norm(h1) + np.linalg.norm(h2))
    if h3[2] * scale < 0:  # board must sit in front of the camera
        scale = -scale
    r1, r2 = scale * h1, scale * h2
    rot = orthonormalize(np.column_stack([r1, r2, np.cross(r1, r2)]))
    return RigidTransform(rot, scale * h3)


def pnp_planar(object_cw, image_px, k: CameraIntrinsics,
               max_iterations: int = 100) -> tuple[RigidTransform, float]:
    """Pose of a planar target from 2D-3D correspondences.

    Pixels are undistorted first; a DLT homography initializes the pose
    and damped Gauss-Newton refines squared pixel reprojection. Returns
    (H_ci mapping CW into the camera frame, mean reprojection residual px).
    """
    obj = np.asarray(object_cw, dtype=float).reshape(-1, 3)
    px = np.asarray(image_px, dtype=float).reshape(-1, 2)
    _check_planar_points(obj)
    und = k.undistort_pixels(px)
    # normalized image coordinates
    xy = np.column_stack([(und[:, 0] - k.cx) / k.fx,
                          (und[:, 1] - k.cy) / k.fy])
    h = fit_homography(obj[:, :2], xy)
    pose = _pose_from_planar_homography(h)

    rot = pose.rotation.copy()
    t = pose.translation.copy()
    f = np.array([k.fx, k.fy])
    c = np.array([k.cx, k.cy])

    def residuals(rot, t):
        p = obj @ rot.T + t
        return (f * (p[:, :2] / p[:, 2:3]) + c - und).ravel(), p

    r, p = residuals(rot, t)
    cost = float(r @ r)
    for it in range(max_iterations):
        z = p[:, 2]
        jac = np.zeros((2 * len(obj), 6))
        # d(pixel)/d(camera point)
        dpx = np.zeros((len(obj), 2, 3))
        dpx[:, 0, 0] = k.fx / z
        dpx[:, 0, 2] = -k.fx * p[:, 0] / z ** 2
        dpx[:, 1, 1] = k.fy / z
        dpx[:, 1, 2] = -k.fy * p[:, 1] / z ** 2
        # left-multiplicative rotation update: dP/dw = -skew(R p)
        rp = obj @ rot.T
        for i in range(len(obj)):
            jac[2 * i:2 * i + 2, :3] = dpx[i] @ (-skew(rp[i]))
            jac[2 * i:2 * i + 2, 3:] = dpx[i]
        step, *_ = np.linalg.lstsq(jac, -r, rcond=None)
        # backtracking line search keeps the objective monotone
        alpha = 1.0
        for _ in range(30):
            w = alpha * step[:3]
            angle = np.linalg.norm(w)
            dr = _exp_so3(w)
            rot_new = orthonormalize(dr @ rot)
            t_new = t + alpha * step[3:]
            r_new, p_new = residuals(rot_new, t_new)
            cost_new = float(r_new @ r_new)
            if cost_new <= cost:
                break
            alpha *= 0.5
        else:
            break  # no descent direction left: at a (numerical) minimum
        improved = cost - cost_new
        rot, t, r, p, cost = rot_new, t_new, r_new, p_new, cost_new
        if np.linalg.norm(alpha * step) < 1e-13 or improved < 1e-16 * (1 + cost):
            break
    else:
        raise NonConvergence(f"PnP refinement did not converge in {max_iterations} iterations")
    mean_residual = float(np.mean(np.linalg.norm(r.reshape(-1, 2), axis=1)))
    return RigidTransform(rot, t), mean_residual


def _exp_so3(w: np.ndarray) -> np.ndarray:
    angle = np.linalg.norm(w)
    if angle < 1e-12:
        return np.eye(3) + skew(w)
    return np.eye(3) + (np.sin(angle) / angle) * skew(w) + \
        ((1 - np.cos(angle)) / angle ** 2) * (skew(w) @ skew(w))


# --- 3D-3D registration --------------------------------------------------------

def register_3d3d(object_cw, measured_o) -> tuple[RigidTransform, float]:
    """Rigid registration of board-frame points onto sensor measurements.

    Returns (H_oi mapping CW into the sensor frame, RMS residual mm).
    """
    t = umeyama_fit(object_cw, measured_o)
    return t, fit_rms(t, object_cw, measured_o)


# --- hand-eye -------------------------------------------------------------------

def _motion_index_pairs(n: int, stride: int = 5) -> list[tuple[int, int]]:
    pairs = [(i, i + 1) for i in range(n - 1)]
    pairs += [(i, i + stride) for i in range(n - stride)]
    return pairs


def relative_motions(pairs: list[PosePair]) -> list[tuple[RigidTransform, RigidTransform]]:
    """(A, B) relative-motion pairs: A from robot poses, B from sensor poses."""
    motions = []
    for i, k in _motion_index_pairs(len(pairs)):
        a = compose(invert(pairs[k].robot_pose), pairs[i].robot_pose)
        b = compose(pairs[k].sensor_pose, invert(pairs[i].sensor_pose))
        motions.append((a, b))
    return motions


def _check_motion_diversity(motions) -> None:
    axes = []
    for a, _ in motions:
        axis, angle = axis_angle_from_rotation(a.rotation)
        if angle > 1e-7:
            axes.append(axis)
    if len(axes) < 2:
        raise InsufficientMotion("need >= 2 relative motions with rotation")
    axes = np.asarray(axes)
    dots = np.abs(axes @ axes.T)
    if np.min(dots) > np.cos(np.deg2rad(5.0)):
        raise InsufficientMotion("rotation axes are within 5 deg of parallel")


def hand_eye_tsai_lenz(pairs: list[PosePair]) -> RigidTransform:
    """Solve AX = XB for X (sensor frame to end-effector frame).

    Rotation via linear least squares on modified Rodrigues vectors,
    then translation via a stacked linear system.
    """
    if len(pairs) < 3:
        raise InsufficientMotion("need >= 3 pose pairs")
    motions = relative_motions(pairs)
    _check_motion_diversity(motions)

    def rodrigues(rot):
        q = quat_from_rotation(rot)
        return 2.0 * q[1:]  # 2 sin(theta/2) * axis

    rows, rhs = [], []
    for a, b in motions:
        pa, pb = rodrigues(a.rotation), rodrigues(b.rotation)
        rows.append(skew(pa + pb))
        rhs.append(pb - pa)
    m = np.vstack(rows)
    v = np.concatenate(rhs)
    p_prime, *_ = np.linalg.lstsq(m, v, rcond=None)
    p = 2.0 * p_prime / np.sqrt(1.0 + p_prime @ p_prime)
    n2 = p @ p
    rot_x = ((1.0 - n2 / 2.0) * np.eye(3)
             + 0.5 * (np.outer(p, p) + np.sqrt(max(0.0, 4.0 - n2)) * skew(p)))
    rot_x = orthonormalize(rot_x)

    lhs, rhs_t = [], []
    for a, b in motions:
        lhs.append(a.rotation - np.eye(3))
        rhs_t.append(rot_x @ b.translation - a.translation)
    lhs = np.vstack(lhs)
    rhs_t = np.concatenate(rhs_t)
    sv = np.linalg.svd(lhs, compute_uv=False)
    if sv[-1] < 1e-6 * sv[0]:
        warnings.warn("hand-eye translation system is poorly conditioned",
                      RuntimeWarning, stacklevel=2)
    t_x, *_ = np.linalg.lstsq(lhs, rhs_t, rcond=None)
    return RigidTransform(rot_x, t_x)


@dataclass(frozen=True)
class MotionResidual:
    """Per-motion AX vs XB mismatch."""

    index_pair: tuple[int, int]
    rotation_deg: float
    translation_mm: float


def residual_diagnostics(pairs: list[PosePair], x: RigidTransform) -> list[MotionResidual]:
    """Decompose ||A X - X B|| into angle and displacement per motion."""
    out = []
    idx = _motion_index_pairs(len(pairs))
    for (i, k), (a, b) in zip(idx, relative_motions(pairs)):
        left = compose(a, x)
        right = compose(x, b)
        _, angle = axis_angle_from_rotation(left.rotation @ right.rotation.T)
        disp = float(np.linalg.norm(left.translation - right.translation))
        out.append(MotionResidual((i, k), float(np.rad2deg(angle)), disp))
    return out
