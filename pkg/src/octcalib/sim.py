"""Synthetic ground-truth world: scenario config, robot pose sampling,
camera observation synthesis, and volumetric OCT rendering.

Frames: O = OCT probe, C = camera, G = end-effector, CW = board world,
RW = robot world. ``true_h_cg``/``true_h_og`` map sensor coordinates into
G; ``board_pose_rw`` maps CW into RW. The OCT ray model is telecentric:
parallel rays along the probe depth axis.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from . import board as board_mod
from .errors import (BoardOutOfView, PlaneOutOfFov, SphereOutOfFov,
                     UnreachableTarget)
from .geom import (EulerRPY, RigidTransform, compose, invert,
                   rotation_from_axis_angle, rotation_from_rpy)
from .solve import CameraIntrinsics
from .volume import OctVolume


@dataclass(frozen=True)
class NoiseParams:
    """All sigmas >= 0; zero disables the corresponding perturbation."""

    corner_px_sigma: float = 0.2
    oct_speckle_sigma: float = 0.05
    robot_trans_sigma: float = 0.05  # mm
    robot_rot_sigma: float = 0.05  # deg
    background_sigma: float = 0.08  # OCT background intensity noise
    oct_corner_mm_sigma: float = 0.02  # analytic (non-rendered) OCT corners

    def __post_init__(self):
        if min(self.__dict__.values()) < 0:
            raise ValueError("noise sigmas must be >= 0")

    @classmethod
    def zero(cls) -> "NoiseParams":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class SurfaceModel:
    """Scan target: ``plane`` (the board plane) or ``sphere`` in RW mm."""

    kind: str = "sphere"
    center: tuple[float, float, float] = (300.0, 50.0, 0.0)
    radius: float = 50.0

    def __post_init__(self):
        if self.kind not in ("plane", "sphere"):
            raise ValueError(f"unknown surface model {self.kind!r}")
        if self.radius <= 0:
            raise ValueError("radius must be positive")


@dataclass(frozen=True)
class DropoutModel:
    """Surface signal scales with cos(incidence)^p and vanishes past cutoff."""

    cos_exponent: float = 2.0
    cutoff_angle_deg: float = 55.0

    def __post_init__(self):
        if not 0.0 < self.cutoff_angle_deg <= 90.0:
            raise ValueError("cutoff angle must be in (0, 90] deg")


def _default_h_cg() -> RigidTransform:
    return RigidTransform(rotation_from_rpy(EulerRPY(68.76, 70.41, 67.71)),
                          np.array([72.33, -62.51, 85.3]))


def _default_h_og() -> RigidTransform:
    return RigidTransform(rotation_from_rpy(EulerRPY(0.27, 91.55, -0.42)),
                          np.array([140.28, -9.40, 92.15]))


def _default_board_pose() -> RigidTransform:
    return RigidTransform(np.eye(3), np.array([300.0, 50.0, 0.0]))


def _default_intrinsics() -> CameraIntrinsics:
    return CameraIntrinsics(600.0, 600.0, 424.0, 240.0,
                            np.array([0.02, -0.05, 0.0005, -0.0005, 0.0]))


@dataclass(frozen=True)
class ScenarioConfig:
    """Ground truth and nuisance parameters: the oracle every estimate is
    judged against."""

    true_h_cg: RigidTransform = field(default_factory=_default_h_cg)
    true_h_og: RigidTransform = field(default_factory=_default_h_og)
    board_pose_rw: RigidTransform = field(default_factory=_default_board_pose)
    intrinsics: CameraIntrinsics = field(default_factory=_default_intrinsics)
    image_size: tuple[int, int] = (848, 480)
    volume_dims: tuple[int, int, int] = (128, 128, 128)  # (Z, X, Y)
    volume_spacing: tuple[float, float, float] = (2.66 / 128, 10.0 / 128, 10.0 / 128)
    noise: NoiseParams = field(default_factory=NoiseParams)
    surface_model: SurfaceModel = field(default_factory=SurfaceModel)
    dropout: DropoutModel = field(default_factory=DropoutModel)
    rng_seed: int = 0
    min_intensity: float = 0.3
    axial_sigma_vox: float = 2.0
    render_supersample: int = 3
    camera_standoff_mm: tuple[float, float] = (180.0, 260.0)
    camera_tilt_deg: tuple[float, float] = (5.0, 25.0)
    oct_tilt_deg: tuple[float, float] = (3.0, 12.0)

    @property
    def fov(self) -> tuple[float, float, float]:
        """(Z, X, Y) OCT field of view in mm."""
        return tuple(d * s for d, s in zip(self.volume_dims, self.volume_spacing))

    def with_zero_noise(self) -> "ScenarioConfig":
        return replace(self, noise=NoiseParams.zero())

    def to_dict(self) -> dict:
        return {
            "true_h_cg": self.true_h_cg.as_flat(),
            "true_h_og": self.true_h_og.as_flat(),
            "board_pose_rw": self.board_pose_rw.as_flat(),
            "intrinsics": {
                "fx": self.intrinsics.fx, "fy": self.intrinsics.fy,
                "cx": self.intrinsics.cx, "cy": self.intrinsics.cy,
                "distortion": [float(v) for v in self.intrinsics.distortion],
            },
            "image_size": list(self.image_size),
            "volume_dims": list(self.volume_dims),
            "volume_spacing": list(self.volume_spacing),
            "noise": dict(self.noise.__dict__),
            "surface_model": {"kind": self.surface_model.kind,
                              "center": list(self.surface_model.center),
                              "radius": self.surface_model.radius},
            "dropout": {"cos_exponent": self.dropout.cos_exponent,
                        "cutoff_angle_deg": self.dropout.cutoff_angle_deg},
            "rng_seed": self.rng_seed,
            "min_intensity": self.min_intensity,
            "axial_sigma_vox": self.axial_sigma_vox,
            "render_supersample": self.render_supersample,
            "camera_standoff_mm": list(self.camera_standoff_mm),
            "camera_tilt_deg": list(self.camera_tilt_deg),
            "oct_tilt_deg": list(self.oct_tilt_deg),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        kw = {}
        for key in ("true_h_cg", "true_h_og", "board_pose_rw"):
            if key in d:
                kw[key] = RigidTransform.from_flat(d[key])
        if "intrinsics" in d:
            ki = d["intrinsics"]
            kw["intrinsics"] = CameraIntrinsics(
                ki["fx"], ki["fy"], ki["cx"], ki["cy"],
                np.asarray(ki.get("distortion", np.zeros(5))))
        if "noise" in d:
            kw["noise"] = NoiseParams(**d["noise"])
        if "surface_model" in d:
            sm = d["surface_model"]
            kw["surface_model"] = SurfaceModel(sm["kind"], tuple(sm["center"]),
                                               sm["radius"])
        if "dropout" in d:
            kw["dropout"] = DropoutModel(d["dropout"]["cos_exponent"],
                                         d["dropout"]["cutoff_angle_deg"])
        for key in ("rng_seed", "min_intensity", "axial_sigma_vox",
                    "render_supersample"):
            if key in d:
                kw[key] = d[key]
        for key in ("image_size", "volume_dims", "volume_spacing",
                    "camera_standoff_mm", "camera_tilt_deg", "oct_tilt_deg"):
            if key in d:
                kw[key] = tuple(d[key])
        return cls(**kw)

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))


@dataclass(frozen=True)
class CameraObservation:
    """Noisy projections of checker corners: row-major indices + pixels."""

    corner_indices: np.ndarray  # (N,)
    pixels: np.ndarray  # (N, 2)


@dataclass(frozen=True)
class Observation:
    """One robot configuration and whatever the sensors saw there."""

    robot_pose_true: RigidTransform
    robot_pose_reported: RigidTransform
    camera_corners: CameraObservation | None = None
    oct_volume: OctVolume | None = None
    oct_marker_points: np.ndarray | None = None  # analytic path: (4, 3) in O
    marker_id: int | None = None


def substream(seed: int, name: str, index: int = 0) -> np.random.Generator:
    """Named, indexed RNG substream; adding observations never reshuffles
    earlier ones."""
    key = zlib.crc32(name.encode())
    return np.random.default_rng(np.random.SeedSequence((int(seed), key, int(index))))


# --- pose sampling ------------------------------------------------------------

_GOLDEN = 0.6180339887498949


def _frame_looking_along(z_axis: np.ndarray, roll_rad: float) -> np.ndarray:
    """Right-handed rotation with the given z column; roll spins about z."""
    z = z_axis / np.linalg.norm(z_axis)
    up = np.array([0.0, 1.0, 0.0])
    if abs(up @ z) > 0.95:
        up = np.array([1.0, 0.0, 0.0])
    x = np.cross(up, z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    r = np.column_stack([x, y, z])
    return r @ rotation_from_axis_angle([0, 0, 1], roll_rad)


def _lateral_center(cfg: ScenarioConfig) -> np.ndarray:
    _, nx, ny = cfg.volume_dims
    _, dx, dy = cfg.volume_spacing
    return np.array([(nx - 1) * dx / 2.0, (ny - 1) * dy / 2.0, 0.0])


def sample_calibration_poses(cfg: ScenarioConfig, n: int, target: str,
                             marker_id: int = 17,
                             force_common_axis: bool = False,
                             max_tries: int = 200) -> list[RigidTransform]:
    """Robot poses (G to RW) keeping the target in the sensor field of view.

    ``target`` is ``camera_board`` (full board in the camera image) or
    ``oct_marker`` (one full marker inside the OCT volume). Azimuths are
    golden-ratio stratified so any n >= 3 spans diverse rotation axes;
    ``force_common_axis`` collapses that diversity for degeneracy tests.
    """
    if n < 3:
        raise ValueError("need n >= 3 calibration poses")
    if target not in ("camera_board", "oct_marker"):
        raise ValueError(f"unknown target {target!r}")
    spec = board_mod.BoardSpec()
    poses = []
    for i in range(n):
        rng = substream(cfg.rng_seed, f"poses:{target}:{marker_id}", i)
        for attempt in range(max_tries):
            if force_common_axis:
                az, roll = 0.0, 0.0
                frac = (i * 7919 + attempt) % 97 / 96.0
            else:
                az = 2 * np.pi * ((_GOLDEN * i) % 1.0) + rng.uniform(-0.4, 0.4)
                roll = rng.uniform(-np.deg2rad(60 if target == "camera_board" else 45),
                                   np.deg2rad(60 if target == "camera_board" else 45))
                frac = rng.uniform(0.0, 1.0)
            if target == "camera_board":
                lo, hi = cfg.camera_tilt_deg
                tilt = np.deg2rad(lo + (hi - lo) * frac)
                pose = _camera_pose(cfg, spec, tilt, az, roll,
                                    rng.uniform(*cfg.camera_standoff_mm))
                if pose is not None and _board_fully_visible(cfg, spec, pose):
                    poses.append(pose)
                    break
            else:
                lo, hi = cfg.oct_tilt_deg
                tilt = np.deg2rad(lo + (hi - lo) * frac)
                pose = _oct_pose(cfg, spec, marker_id, tilt, az, roll)
                if pose is not None and _marker_inside_fov(cfg, spec, marker_id, pose):
                    poses.append(pose)
                    break
        else:
            raise UnreachableTarget(
                f"no valid pose for {target} after {max_tries} tries (index {i})")
    return poses


def _camera_pose(cfg, spec, tilt, az, roll, dist) -> RigidTransform | None:
    wx, wy = spec.extent
    center = np.array([wx / 2.0, wy / 2.0, 0.0])
    up_dir = np.array([np.sin(tilt) * np.cos(az), np.sin(tilt) * np.sin(az),
                       np.cos(tilt)])
    position = center + dist * up_dir
    rot = _frame_looking_along(-up_dir, roll)
    h_c2cw = RigidTransform(rot, position)
    return compose(cfg.board_pose_rw, compose(h_c2cw, invert(cfg.true_h_cg)))


def _board_fully_visible(cfg, spec, robot_pose) -> bool:
    wx, wy = spec.extent
    outline = np.array([[0, 0, 0], [wx, 0, 0], [wx, wy, 0], [0, wy, 0]], dtype=float)
    pts = np.vstack([board_mod.checker_corners_cw(spec), outline])
    h_ci = camera_pose_for_robot(cfg, robot_pose)
    p_c = h_ci.apply(pts)
    if np.any(p_c[:, 2] < 10.0):
        return False
    px = cfg.intrinsics.project(p_c)
    w, h = cfg.image_size
    margin = 8.0
    return bool(np.all((px[:, 0] >= margin) & (px[:, 0] <= w - 1 - margin)
                       & (px[:, 1] >= margin) & (px[:, 1] <= h - 1 - margin)))


def _oct_pose(cfg, spec, marker_id, tilt, az, roll) -> RigidTransform | None:
    m = spec.marker_center_cw(marker_id)
    up_dir = np.array([np.sin(tilt) * np.cos(az), np.sin(tilt) * np.sin(az),
                       np.cos(tilt)])
    rot = _frame_looking_along(-up_dir, roll)
    center = _lateral_center(cfg).copy()
    center[2] = cfg.fov[0] / 2.0
    h_o2cw = RigidTransform(rot, m - rot @ center)
    return compose(cfg.board_pose_rw, compose(h_o2cw, invert(cfg.true_h_og)))


def _marker_inside_fov(cfg, spec, marker_id, robot_pose) -> bool:
    corners = board_mod.marker_corners_cw(spec, marker_id)
    h_oi = oct_pose_for_robot(cfg, robot_pose)
    p_o = h_oi.apply(corners)
    fz, fx, fy = cfg.fov
    _, dx, dy = cfg.volume_spacing
    lat_margin = 0.8
    return bool(np.all((p_o[:, 0] >= lat_margin) & (p_o[:, 0] <= fx - dx - lat_margin)
                       & (p_o[:, 1] >= lat_margin) & (p_o[:, 1] <= fy - dy - lat_margin)
                       & (p_o[:, 2] >= 0.35) & (p_o[:, 2] <= fz - 0.35)))


def camera_pose_for_robot(cfg: ScenarioConfig, robot_pose: RigidTransform) -> RigidTransform:
    """True H_ci (CW to camera) for a given true robot pose."""
    return compose(invert(compose(robot_pose, cfg.true_h_cg)), cfg.board_pose_rw)


def oct_pose_for_robot(cfg: ScenarioConfig, robot_pose: RigidTransform) -> RigidTransform:
    """True H_oi (CW to probe) for a given true robot pose."""
    return compose(invert(compose(robot_pose, cfg.true_h_og)), cfg.board_pose_rw)


# --- observation synthesis -----------------------------------------------------

def perturb_robot_pose(cfg: ScenarioConfig, pose: RigidTransform,
                       rng: np.random.Generator) -> RigidTransform:
    """Right-multiply by a small random transform (kinematic error model)."""
    sig_t = cfg.noise.robot_trans_sigma
    sig_r = np.deg2rad(cfg.noise.robot_rot_sigma)
    axis = rng.normal(size=3)
    axis /= max(1e-12, np.linalg.norm(axis))
    angle = rng.normal(0.0, sig_r) if sig_r > 0 else 0.0
    dt = rng.normal(0.0, sig_t, size=3) if sig_t > 0 else np.zeros(3)
    delta = RigidTransform(rotation_from_axis_angle(axis, angle), dt)
    return compose(pose, delta)


def observe_camera(cfg: ScenarioConfig, robot_pose_true: RigidTransform,
                   rng: np.random.Generator | None = None) -> CameraObservation:
    """Project all checker corners through the true chain, add pixel noise,
    drop points outside the image."""
    spec = board_mod.BoardSpec()
    corners = board_mod.checker_corners_cw(spec)
    p_c = camera_pose_for_robot(cfg, robot_pose_true).apply(corners)
    if np.any(p_c[:, 2] <= 1.0):
        raise BoardOutOfView("board behind or too close to the camera")
    px = cfg.intrinsics.project(p_c)
    w, h = cfg.image_size
    inside = ((px[:, 0] >= 0) & (px[:, 0] < w) & (px[:, 1] >= 0) & (px[:, 1] < h))
    if inside.sum() < 4:
        raise BoardOutOfView("board projects outside the image")
    if rng is not None and cfg.noise.corner_px_sigma > 0:
        px = px + rng.normal(0.0, cfg.noise.corner_px_sigma, size=px.shape)
        inside &= ((px[:, 0] >= 0) & (px[:, 0] < w)
                   & (px[:, 1] >= 0) & (px[:, 1] < h))
    idx = np.flatnonzero(inside)
    return CameraObservation(idx, px[idx])


def _deposit_axial(cfg: ScenarioConfig, amp: np.ndarray, depth: np.ndarray,
                   rng: np.random.Generator | None) -> np.ndarray:
    """Gaussian axial profile per lateral cell, plus speckle and background."""
    nz = cfg.volume_dims[0]
    dz = cfg.volume_spacing[0]
    sigma_mm = cfg.axial_sigma_vox * dz
    z_mm = np.arange(nz)[:, None, None] * dz
    signal = amp[None] * np.exp(-(z_mm - depth[None]) ** 2 / (2.0 * sigma_mm ** 2))
    if rng is not None and cfg.noise.oct_speckle_sigma > 0:
        signal = signal * (1.0 + rng.normal(0.0, cfg.noise.oct_speckle_sigma,
                                            size=signal.shape))
    if rng is not None and cfg.noise.background_sigma > 0:
        signal = signal + np.abs(rng.normal(0.0, cfg.noise.background_sigma,
                                            size=signal.shape))
    return np.clip(signal, 0.0, 1.0).astype(np.float32)


def _lateral_subray_grid(cfg: ScenarioConfig) -> tuple[np.ndarray, int, int, int]:
    _, nx, ny = cfg.volume_dims
    _, dx, dy = cfg.volume_spacing
    ss = max(1, int(cfg.render_supersample))
    off = ((np.arange(ss) + 0.5) / ss - 0.5)
    ux = (np.arange(nx)[:, None] + off[None, :]).reshape(-1) * dx
    uy = (np.arange(ny)[:, None] + off[None, :]).reshape(-1) * dy
    gx, gy = np.meshgrid(ux, uy, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)])
    return pts, nx, ny, ss


def _cell_mean(v: np.ndarray, nx: int, ny: int, ss: int) -> np.ndarray:
    return v.reshape(nx, ss, ny, ss).mean(axis=(1, 3))


def render_oct_board(cfg: ScenarioConfig, robot_pose_true: RigidTransform,
                     rng: np.random.Generator | None = None,
                     reported_pose: RigidTransform | None = None) -> OctVolume:
    """Render the board plane into an OCT volume (telecentric ray model)."""
    spec = board_mod.BoardSpec()
    h_oi = oct_pose_for_robot(cfg, robot_pose_true)
    h_o2cw = invert(h_oi)
    d_cw = h_o2cw.rotation[:, 2]
    if abs(d_cw[2]) < 1e-6:
        raise PlaneOutOfFov("probe rays parallel to the board plane")
    origins, nx, ny, ss = _lateral_subray_grid(cfg)
    o_cw = h_o2cw.apply(origins)
    t_hit = -o_cw[:, 2] / d_cw[2]
    hit_xy = o_cw[:, :2] + t_hit[:, None] * d_cw[:2]
    reflect = board_mod.albedo(spec, hit_xy[:, 0], hit_xy[:, 1])
    cos_inc = abs(d_cw[2])
    if np.rad2deg(np.arccos(min(1.0, cos_inc))) > cfg.dropout.cutoff_angle_deg:
        reflect = np.zeros_like(reflect)
    else:
        reflect = reflect * cos_inc ** cfg.dropout.cos_exponent
    amp = _cell_mean(reflect, nx, ny, ss)
    depth = _cell_mean(t_hit, nx, ny, ss)
    fz = cfg.fov[0]
    if not np.any((depth > -0.2) & (depth < fz + 0.2)):
        raise PlaneOutOfFov("board plane outside the depth range everywhere")
    data = _deposit_axial(cfg, amp, depth, rng)
    return OctVolume(data, cfg.volume_spacing,
                     reported_pose if reported_pose is not None else robot_pose_true)


def render_oct_sphere(cfg: ScenarioConfig, robot_pose_true: RigidTransform,
                      rng: np.random.Generator | None = None,
                      reported_pose: RigidTransform | None = None) -> OctVolume:
    """Render the spherical phantom: first ray-sphere hit per lateral cell,
    cos^p incidence shading, hard dropout past the cutoff angle."""
    sm = cfg.surface_model
    if sm.kind != "sphere":
        raise ValueError("scenario surface model is not a sphere")
    h_o2rw = compose(robot_pose_true, cfg.true_h_og)
    d = h_o2rw.rotation[:, 2]
    origins, nx, ny, ss = _lateral_subray_grid(cfg)
    o_rw = h_o2rw.apply(origins)
    oc = o_rw - np.asarray(sm.center)
    b = oc @ d
    c = np.sum(oc * oc, axis=1) - sm.radius ** 2
    disc = b * b - c
    hit = disc >= 0.0
    if not np.any(hit):
        raise SphereOutOfFov("no ray intersects the sphere")
    t_hit = np.where(hit, -b - np.sqrt(np.maximum(disc, 0.0)), np.nan)
    normal = (oc + t_hit[:, None] * d) / sm.radius
    cos_inc = np.abs(normal @ d)
    angle = np.rad2deg(np.arccos(np.clip(cos_inc, 0.0, 1.0)))
    lit = hit & (angle <= cfg.dropout.cutoff_angle_deg)
    reflect = np.where(lit, board_mod.WHITE_LEVEL
                       * np.clip(cos_inc, 0.0, 1.0) ** cfg.dropout.cos_exponent, 0.0)
    amp = _cell_mean(reflect, nx, ny, ss)
    depth_sub = np.where(lit, t_hit, 0.0)
    weight = _cell_mean(lit.astype(float), nx, ny, ss)
    with np.errstate(invalid="ignore"):
        depth = np.where(weight > 0, _cell_mean(depth_sub, nx, ny, ss)
                         / np.maximum(weight, 1e-12), -1e6)
    data = _deposit_axial(cfg, amp, depth, rng)
    return OctVolume(data, cfg.volume_spacing,
                     reported_pose if reported_pose is not None else robot_pose_true)


def render_camera_view(cfg: ScenarioConfig, robot_pose_true: RigidTransform,
                       pixels_per_unit: int = 1, supersample: int = 2,
                       rng: np.random.Generator | None = None) -> np.ndarray:
    """Rendered grayscale camera image of the board, indexed [u, v].

    Only used when detection on real camera frames is exercised; the
    default simulation path emits projected corners directly.
    """
    spec = board_mod.BoardSpec()
    h_ci = camera_pose_for_robot(cfg, robot_pose_true)
    k = cfg.intrinsics
    w, h = cfg.image_size
    w, h = w * pixels_per_unit, h * pixels_per_unit
    ss = max(1, int(supersample))
    off = (np.arange(ss) + 0.5) / ss - 0.5
    us = (np.arange(w)[:, None] + off[None, :]).reshape(-1) / pixels_per_unit
    vs = (np.arange(h)[:, None] + off[None, :]).reshape(-1) / pixels_per_unit
    gu, gv = np.meshgrid(us, vs, indexing="ij")
    px = np.column_stack([gu.ravel(), gv.ravel()])
    und = k.undistort_pixels(px)
    xn = (und[:, 0] - k.cx) / k.fx
    yn = (und[:, 1] - k.cy) / k.fy
    # board plane homography: pixel ray -> z=0 plane of CW
    r = h_ci.rotation
    t = h_ci.translation
    hmat = np.column_stack([r[:, 0], r[:, 1], t])
    inv = np.linalg.inv(hmat)
    q = np.column_stack([xn, yn, np.ones(len(xn))]) @ inv.T
    bx = q[:, 0] / q[:, 2]
    by = q[:, 1] / q[:, 2]
    img = board_mod.albedo(spec, bx, by).reshape(w, ss, h, ss).mean(axis=(1, 3))
    if rng is not None and cfg.noise.corner_px_sigma > 0:
        img = np.clip(img + rng.normal(0.0, 0.02, size=img.shape), 0.0, 1.0)
    return img


def observe_oct_analytic(cfg: ScenarioConfig, robot_pose_true: RigidTransform,
                         marker_id: int,
                         rng: np.random.Generator | None = None) -> np.ndarray:
    """Marker corner positions in the probe frame, bypassing rendering."""
    spec = board_mod.BoardSpec()
    corners = board_mod.marker_corners_cw(spec, marker_id)
    p_o = oct_pose_for_robot(cfg, robot_pose_true).apply(corners)
    if rng is not None and cfg.noise.oct_corner_mm_sigma > 0:
        p_o = p_o + rng.normal(0.0, cfg.noise.oct_corner_mm_sigma, size=p_o.shape)
    return p_o


def simulate_camera_observations(cfg: ScenarioConfig, n: int) -> list[Observation]:
    """Sample camera calibration poses and synthesize corner observations."""
    nominal = sample_calibration_poses(cfg, n, "camera_board")
    out = []
    for i, pose in enumerate(nominal):
        rng = substream(cfg.rng_seed, "cam_obs", i)
        true_pose = perturb_robot_pose(cfg, pose, rng)
        out.append(Observation(true_pose, pose,
                               camera_corners=observe_camera(cfg, true_pose, rng)))
    return out


def simulate_oct_observations(cfg: ScenarioConfig, n: int, marker_id: int = 17,
                              render: bool = True,
                              force_common_axis: bool = False) -> list[Observation]:
    """Sample OCT calibration poses over one marker; rendered or analytic."""
    nominal = sample_calibration_poses(cfg, n, "oct_marker", marker_id=marker_id,
                                       force_common_axis=force_common_axis)
    out = []
    for i, pose in enumerate(nominal):
        rng = substream(cfg.rng_seed, f"oct_obs:{marker_id}", i)
        true_pose = perturb_robot_pose(cfg, pose, rng)
        if render:
            vol = render_oct_board(cfg, true_pose, rng, reported_pose=pose)
            out.append(Observation(true_pose, pose, oct_volume=vol,
                                   marker_id=marker_id))
        else:
            pts = observe_oct_analytic(cfg, true_pose, marker_id, rng)
            out.append(Observation(true_pose, pose, oct_marker_points=pts,
                                   marker_id=marker_id))
    return out
