"""Surface scanning strategies, pose-based stitching, and shape metrics.

Implements the two scan modes under comparison — a conventional raster that
only translates the probe (with an axial depth servo) and a full-6D plan
that keeps the probe axis pointed at the sphere center — plus stitching of
extracted surfaces through the calibrated hand-eye transform, geometric
sphere fitting, cross sections, and cap-coverage reporting. Stitching is
strictly pose-based; no point-cloud registration is performed anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (DegenerateCloud, EmptyCloud, EmptySection,
                     NonConvergence, PlaneOutOfFov, SphereOutOfFov)
from .geom import RigidTransform, apply, compose, invert
from .sim import (ScenarioConfig, perturb_robot_pose, render_oct_board,
                  render_oct_sphere, substream)
from .volume import OctVolume, extract_surface


@dataclass(frozen=True)
class ScanPlan:
    """Ordered robot poses (G -> RW) plus the mode that produced them."""

    mode: str  # "translation3d" | "full6d"
    poses: list[RigidTransform]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("translation3d", "full6d"):
            raise ValueError(f"unknown scan mode {self.mode!r}")
        if not self.poses:
            raise ValueError("scan plan has no poses")


@dataclass(frozen=True)
class PointCloud:
    """Stitched surface points in the robot world frame."""

    points_rw: np.ndarray  # (N, 3) mm
    intensity: np.ndarray  # (N,)
    source_volume: np.ndarray  # (N,) int

    def __post_init__(self):
        pts = np.asarray(self.points_rw, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points_rw", pts)
        object.__setattr__(self, "intensity",
                           np.asarray(self.intensity, dtype=float))
        object.__setattr__(self, "source_volume",
                           np.asarray(self.source_volume, dtype=int))

    def __len__(self) -> int:
        return len(self.points_rw)


@dataclass(frozen=True)
class SphereFit:
    center: np.ndarray
    radius: float
    residuals: np.ndarray  # signed distance |p - c| - r per point


def _probe_to_robot(probe_pose: RigidTransform,
                    h_og: RigidTransform) -> RigidTransform:
    """Robot pose whose probe frame (via h_og) lands at probe_pose."""
    return compose(probe_pose, invert(h_og))


def _fov_mid(fov: tuple[float, float, float]) -> np.ndarray:
    """Probe-frame point at the lateral center, mid depth. fov = (z, x, y)."""
    fz, fx, fy = fov
    return np.array([fx / 2.0, fy / 2.0, fz / 2.0])


def plan_translation_raster(bounds_rw, xy_step: float,
                            fixed_orientation: np.ndarray,
                            h_og: RigidTransform,
                            fov: tuple[float, float, float],
                            depth_servo=None,
                            initial_depth: float = 0.0) -> ScanPlan:
    """Serpentine raster over a lateral RW rectangle at fixed orientation.

    ``fixed_orientation`` is the probe frame's rotation in RW (depth axis
    typically pointing down). Each pose places the lateral FOV center over
    the grid cell; its axial position maps the expected surface height to
    FOV mid-depth. ``depth_servo`` is a previous surface estimate, a
    callable (x, y) -> surface z in RW or None; cells without an estimate
    use ``initial_depth``.
    """
    (x0, x1), (y0, y1) = bounds_rw
    r = np.asarray(fixed_orientation, dtype=float)
    xs = np.arange(x0, x1 + 1e-9, xy_step)
    ys = np.arange(y0, y1 + 1e-9, xy_step)
    mid = _fov_mid(fov)
    poses = []
    for j, y in enumerate(ys):
        row = xs if j % 2 == 0 else xs[::-1]
        for x in row:
            z = None if depth_servo is None else depth_servo(x, y)
            target = np.array([x, y, initial_depth if z is None else z])
            probe = RigidTransform(r, target - r @ mid)
            poses.append(_probe_to_robot(probe, h_og))
    meta = {"xy_step": xy_step, "cols": len(xs), "rows": len(ys),
            "initial_depth": initial_depth}
    return ScanPlan("translation3d", poses, meta)


def plan_6d_sphere(center, radius: float, standoff: float,
                   angular_grid: tuple[int, int], h_og: RigidTransform,
                   cap_angle_deg: float = 40.0) -> ScanPlan:
    """Poses on a spherical cap with the probe depth axis through center.

    ``angular_grid`` is (n_theta rings, n_phi azimuths per ring); ring
    polar angles run from the pole outward over the cap. Every probe
    origin lies at radius + standoff from the center with its depth axis
    aimed exactly at the center, so local incidence at each patch apex is
    zero.
    """
    if not 0.0 < cap_angle_deg <= 90.0:
        raise ValueError("cap must be a nonempty cap of at most a hemisphere")
    c = np.asarray(center, dtype=float)
    n_theta, n_phi = angular_grid
    poses = []
    for i in range(n_theta):
        theta = np.deg2rad(cap_angle_deg) * i / n_theta
        for j in range(n_phi):
            phi = 2.0 * np.pi * (j + 0.5 * (i % 2)) / n_phi
            d = np.array([np.sin(theta) * np.cos(phi),
                          np.sin(theta) * np.sin(phi),
                          np.cos(theta)])
            z_axis = -d  # depth axis points at the center
            # lateral x axis along the outward polar tangent: the probe
            # origin ray hits the patch apex, so the (positive) lateral
            # FOV quadrant extends toward larger polar angles and tiles
            # the cap ring by ring
            x_axis = np.array([np.cos(theta) * np.cos(phi),
                               np.cos(theta) * np.sin(phi),
                               -np.sin(theta)])
            y_axis = np.cross(z_axis, x_axis)
            r = np.column_stack([x_axis, y_axis, z_axis])
            probe = RigidTransform(r, c + d * (radius + standoff))
            poses.append(_probe_to_robot(probe, h_og))
    meta = {"n_theta": n_theta, "n_phi": n_phi, "radius": radius,
            "standoff": standoff, "cap_angle_deg": cap_angle_deg}
    return ScanPlan("full6d", poses, meta)


# --- acquisition ---------------------------------------------------------------


def acquire_scan(cfg: ScenarioConfig, plan: ScanPlan, h_og: RigidTransform,
                 min_intensity: float = 0.3) -> list[OctVolume]:
    """Render one volume per plan pose; cells missing the target are skipped.

    For the translation mode an axial depth servo re-centers each pose:
    the median detected surface depth of the previous volume is shifted to
    FOV mid-depth by sliding the commanded pose along the probe depth
    axis (the median resists dropout outliers). The 6D plan needs no servo
    since its standoff already centers the target.
    """
    render = render_oct_sphere if cfg.surface_model.kind == "sphere" \
        else render_oct_board
    fz = cfg.volume_dims[0] * cfg.volume_spacing[0]
    volumes = []
    depth_offset = 0.0
    for i, commanded in enumerate(plan.poses):
        pose = commanded
        if plan.mode == "translation3d" and depth_offset != 0.0:
            probe = compose(commanded, h_og)
            shift = probe.rotation[:, 2] * depth_offset
            pose = RigidTransform(commanded.rotation,
                                  commanded.translation + shift)
        rng = substream(cfg.rng_seed, f"scan:{plan.mode}", i)
        reported = perturb_robot_pose(cfg, pose, rng)
        try:
            vol = render(cfg, pose, rng, reported_pose=reported)
        except (SphereOutOfFov, PlaneOutOfFov):
            continue
        volumes.append(vol)
        if plan.mode == "translation3d":
            surf = extract_surface(vol, min_intensity)
            # only a substantial detection moves the servo: sparse
            # above-threshold cells are background noise whose median
            # depth is meaningless and would random-walk the probe
            if len(surf.points_o) >= 0.05 * surf.mask.size:
                depth_offset += float(np.median(surf.points_o[:, 2])) - fz / 2
    return volumes


def stitch(volumes: list[OctVolume], h_og: RigidTransform,
           min_intensity: float) -> PointCloud:
    """Extract each volume's surface and map it to RW via the recorded pose.

    p_rw = H_gi . H_og . p_o per point; volumes contributing no points are
    allowed and simply absent from the output.
    """
    pts, inten, src = [], [], []
    for i, vol in enumerate(volumes):
        surf = extract_surface(vol, min_intensity)
        if not len(surf.points_o):
            continue
        chain = compose(vol.acquisition_pose, h_og)
        pts.append(apply(chain, surf.points_o))
        inten.append(surf.intensity)
        src.append(np.full(len(surf.points_o), i))
    if not pts:
        return PointCloud(np.empty((0, 3)), np.empty(0), np.empty(0, dtype=int))
    return PointCloud(np.vstack(pts), np.concatenate(inten),
                      np.concatenate(src))


# --- sphere fitting ------------------------------------------------------------


def _coope_init(pts: np.ndarray) -> tuple[np.ndarray, float]:
    """Algebraic sphere fit (linear least squares)."""
    a = np.column_stack([2.0 * pts, np.ones(len(pts))])
    b = np.sum(pts * pts, axis=1)
    sol, _, _, _ = np.linalg.lstsq(a, b, rcond=None)
    center = sol[:3]
    radius = float(np.sqrt(max(sol[3] + center @ center, 0.0)))
    return center, radius


def fit_sphere(cloud: PointCloud | np.ndarray, max_iter: int = 100) -> SphereFit:
    """Geometric sphere fit: algebraic initialization, then Gauss-Newton on
    the signed radial distances with step halving (residual RMS never
    increases across accepted steps). Converges when the step drops below
    1e-10 mm."""
    pts = cloud.points_rw if isinstance(cloud, PointCloud) else \
        np.asarray(cloud, dtype=float).reshape(-1, 3)
    if len(pts) < 10:
        raise DegenerateCloud(f"{len(pts)} points; sphere fit needs >= 10")
    sv = np.linalg.svd(pts - pts.mean(axis=0), compute_uv=False)
    if sv[2] < 1e-6 * max(sv[0], 1.0):
        raise DegenerateCloud("points are coplanar; sphere is unobservable")
    center, radius = _coope_init(pts)

    def residuals(c, r):
        return np.linalg.norm(pts - c, axis=1) - r

    res = residuals(center, radius)
    cost = res @ res
    for _ in range(max_iter):
        diff = pts - center
        dist = np.linalg.norm(diff, axis=1)
        jac = np.column_stack([-diff / dist[:, None], -np.ones(len(pts))])
        step, _, _, _ = np.linalg.lstsq(jac, -res, rcond=None)
        scale = 1.0
        while scale > 1e-12:
            c_new = center + scale * step[:3]
            r_new = radius + scale * step[3]
            res_new = residuals(c_new, r_new)
            if res_new @ res_new <= cost:
                break
            scale /= 2.0
        center, radius, res = c_new, r_new, res_new
        cost = res @ res
        if np.linalg.norm(scale * step) < 1e-10:
            if radius <= 0:
                raise DegenerateCloud("sphere fit collapsed to radius <= 0")
            return SphereFit(center, float(radius), res)
    raise NonConvergence(f"sphere fit did not converge in {max_iter} steps")


# --- sections and coverage -----------------------------------------------------


def cross_section(cloud: PointCloud, plane_point, plane_normal,
                  thickness: float) -> np.ndarray:
    """Points within thickness/2 of the plane, in 2D plane coordinates,
    sorted along the first in-plane axis. Returns an (M, 2) array."""
    p0 = np.asarray(plane_point, dtype=float)
    n = np.asarray(plane_normal, dtype=float)
    n = n / np.linalg.norm(n)
    d = (cloud.points_rw - p0) @ n
    sel = np.abs(d) <= thickness / 2.0
    if not np.any(sel):
        raise EmptySection("no points within the section slab")
    helper = np.array([0.0, 0.0, 1.0])
    if abs(helper @ n) > 0.9:
        helper = np.array([1.0, 0.0, 0.0])
    u = np.cross(helper, n)
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    rel = cloud.points_rw[sel] - p0
    prof = np.column_stack([rel @ u, rel @ v])
    return prof[np.argsort(prof[:, 0])]


@dataclass(frozen=True)
class CoverageReport:
    """Occupancy of ~1 mm^2 bins over an expected spherical cap.

    ``cell_theta_deg`` is each expected cell's polar angle from the cap
    axis (equal to the surface incidence angle of a straight-down scan);
    dropout cells are the unoccupied ones.
    """

    coverage: float
    cell_theta_deg: np.ndarray
    cell_phi_deg: np.ndarray
    occupied: np.ndarray  # bool per expected cell


def coverage_report(cloud: PointCloud, center, radius: float,
                    cap_axis=(0.0, 0.0, 1.0), cap_angle_deg: float = 60.0,
                    bin_mm: float = 1.0,
                    dist_tol: float = 1.0) -> CoverageReport:
    """Fraction of cap cells containing at least one near-surface point.

    The cap is flattened with the Lambert azimuthal equal-area projection
    about its axis so square bins of ``bin_mm`` side have equal surface
    area; only points within ``dist_tol`` of the sphere count.
    """
    c = np.asarray(center, dtype=float)
    axis = np.asarray(cap_axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    helper = np.array([1.0, 0.0, 0.0])
    if abs(helper @ axis) > 0.9:
        helper = np.array([0.0, 1.0, 0.0])
    e1 = np.cross(helper, axis)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)

    def lambert(dirs):
        ct = np.clip(dirs @ axis, -1.0, 1.0)
        rho = 2.0 * radius * np.sin(np.arccos(ct) / 2.0)
        phi = np.arctan2(dirs @ e2, dirs @ e1)
        return np.column_stack([rho * np.cos(phi), rho * np.sin(phi)]), ct

    cap = np.deg2rad(cap_angle_deg)
    rho_max = 2.0 * radius * np.sin(cap / 2.0)
    n_cells = int(np.ceil(2.0 * rho_max / bin_mm))
    grid = (np.arange(n_cells) + 0.5) * bin_mm - rho_max
    gx, gy = np.meshgrid(grid, grid, indexing="ij")
    rho_cell = np.hypot(gx, gy)
    expected = rho_cell <= rho_max
    theta_cell = 2.0 * np.arcsin(np.clip(rho_cell / (2.0 * radius), 0, 1))
    phi_cell = np.arctan2(gy, gx)

    hit = np.zeros_like(expected)
    if len(cloud):
        rad = np.linalg.norm(cloud.points_rw - c, axis=1)
        near = np.abs(rad - radius) <= dist_tol
        if np.any(near):
            dirs = (cloud.points_rw[near] - c) / rad[near, None]
            uv, ct = lambert(dirs)
            inside = ct >= np.cos(cap)
            ij = np.floor((uv[inside] + rho_max) / bin_mm).astype(int)
            ok = np.all((ij >= 0) & (ij < n_cells), axis=1)
            hit[ij[ok, 0], ij[ok, 1]] = True
    occupied = hit[expected]
    cov = float(occupied.mean()) if occupied.size else 0.0
    return CoverageReport(cov, np.degrees(theta_cell[expected]),
                          np.degrees(phi_cell[expected]), occupied)


# --- PLY export ----------------------------------------------------------------


def save_ply(path, cloud: PointCloud, binary: bool = False) -> None:
    """Write the cloud as PLY with x, y, z, intensity float properties."""
    if not len(cloud):
        raise EmptyCloud("refusing to export an empty point cloud")
    n = len(cloud)
    fmt = "binary_little_endian" if binary else "ascii"
    header = "\n".join([
        "ply", f"format {fmt} 1.0", f"element vertex {n}",
        "property float x", "property float y", "property float z",
        "property float intensity", "end_header", ""])
    data = np.column_stack([cloud.points_rw,
                            cloud.intensity]).astype("<f4")
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        if binary:
            f.write(data.tobytes())
        else:
            lines = ["%.9g %.9g %.9g %.9g" % tuple(row) for row in data]
            f.write(("\n".join(lines) + "\n").encode("ascii"))


def load_ply(path) -> PointCloud:
    """Read a PLY written by save_ply (x, y, z, intensity; ascii or binary)."""
    with open(path, "rb") as f:
        raw = f.read()
    head_end = raw.index(b"end_header\n") + len(b"end_header\n")
    header = raw[:head_end].decode("ascii").splitlines()
    if header[0] != "ply":
        raise ValueError(f"{path}: not a PLY file")
    fmt = next(l.split()[1] for l in header if l.startswith("format"))
    n = int(next(l.split()[2] for l in header if l.startswith("element vertex")))
    if fmt == "binary_little_endian":
        data = np.frombuffer(raw[head_end:], dtype="<f4",
                             count=4 * n).reshape(n, 4)
    else:
        data = np.loadtxt(raw[head_end:].decode("ascii").splitlines(),
                          dtype=float).reshape(n, 4)
    return PointCloud(data[:, :3].astype(float), data[:, 3].astype(float),
                      np.zeros(n, dtype=int))
