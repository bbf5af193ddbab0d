"""Quantitative evaluation of a finished calibration.

Implements the cross-sensor reprojection error (the same marker corner
mapped into the robot world once through the camera chain and once through
the OCT chain), the plateau and held-out-marker distance studies, and
multi-run repeatability statistics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import board as board_mod
from .errors import NoCommonMarkers, NoHeldOutMarkers
from .geom import (EulerRPY, RigidTransform, apply, compose,
                   quat_from_rotation, rotation_from_quat, rpy_from_rotation)
from .pipeline import (CalibrationDataset, CalibrationResult, build_dataset,
                       calibrate, scenario_for_run, solve_camera_poses,
                       solve_oct_poses)
from .sim import Observation, ScenarioConfig


@dataclass(frozen=True)
class ReprojectionRecord:
    """One marker corner seen through both sensor chains.

    ``x_cwi`` is the corner mapped to the robot world via the camera at
    pose i, ``x_cwk`` via the OCT probe at pose k; ``rmse`` is their
    Euclidean distance in mm.
    """

    marker_id: int
    pose_i: int
    pose_k: int
    corner: int
    x_cwi: np.ndarray
    x_cwk: np.ndarray
    rmse: float


def _camera_chain(h_gi: RigidTransform, h_cg: RigidTransform,
                  h_ci: RigidTransform, p_cw: np.ndarray) -> np.ndarray:
    return apply(compose(compose(h_gi, h_cg), h_ci), p_cw)


def reprojection_error(h_cg: RigidTransform, h_og: RigidTransform,
                       cam_obs: list[Observation], oct_obs: list[Observation],
                       cfg: ScenarioConfig,
                       spec: board_mod.BoardSpec | None = None
                       ) -> list[ReprojectionRecord]:
    """Per-corner cross-sensor reprojection records over all (i, k) pairs.

    Camera poses come from planar PnP on the observed corners, OCT poses
    from 3D-3D registration of the detected marker corners; both are then
    chained through the reported robot poses and the supplied hand-eye
    estimates.
    """
    spec = spec or board_mod.BoardSpec()
    cam_solved = solve_camera_poses(cfg, spec, cam_obs)
    oct_solved = solve_oct_poses(cfg, spec, oct_obs)
    records = []
    for k, osol in enumerate(oct_solved):
        corners_cw = board_mod.marker_corners_cw(spec, osol.marker_id)
        x_oct = apply(compose(compose(osol.robot_pose, h_og),
                              osol.sensor_pose), corners_cw)
        for i, csol in enumerate(cam_solved):
            x_cam = _camera_chain(csol.robot_pose, h_cg, csol.sensor_pose,
                                  corners_cw)
            d = np.linalg.norm(x_cam - x_oct, axis=1)
            for c in range(4):
                records.append(ReprojectionRecord(osol.marker_id, i, k, c,
                                                  x_cam[c], x_oct[c],
                                                  float(d[c])))
    if not records:
        raise NoCommonMarkers("no marker observed by both sensor chains")
    return records


def marker_rms(records: list[ReprojectionRecord]) -> dict[int, float]:
    """Per-marker RMS of the per-corner distances."""
    by_marker: dict[int, list[float]] = {}
    for r in records:
        by_marker.setdefault(r.marker_id, []).append(r.rmse)
    return {m: float(np.sqrt(np.mean(np.square(v))))
            for m, v in sorted(by_marker.items())}


def summarize(records: list[ReprojectionRecord]) -> tuple[float, float]:
    """(mean, std) of the per-marker RMS values."""
    vals = np.array(list(marker_rms(records).values()))
    return float(vals.mean()), float(vals.std())


# --- studies --------------------------------------------------------------------


@dataclass(frozen=True)
class CurvePoint:
    x: float
    mean_rmse: float
    std_rmse: float


def plateau_study(ds: CalibrationDataset,
                  n_values: list[int]) -> list[CurvePoint]:
    """Reprojection error versus number of OCT volumes used for calibration.

    For each n the hand-eye pair is re-solved on the first n OCT volumes
    (camera set fixed) and evaluated on the held-out OCT observations.
    """
    if not ds.heldout_oct:
        raise NoHeldOutMarkers("plateau study needs held-out OCT observations")
    if max(n_values) > len(ds.oct_obs):
        raise ValueError("n exceeds available OCT observations")
    curve = []
    for n in sorted(n_values):
        res = calibrate(ds.cfg, ds.cam_obs, ds.oct_obs[:n])
        recs = reprojection_error(res.h_cg, res.h_og, ds.cam_obs,
                                  ds.heldout_oct, ds.cfg)
        mean, std = summarize(recs)
        curve.append(CurvePoint(float(n), mean, std))
    return curve


def marker_distance(spec: board_mod.BoardSpec, marker_id: int,
                    center_marker: int = 17) -> float:
    """In-plane distance between two marker centers, mm."""
    a = board_mod.marker_corners_cw(spec, marker_id).mean(axis=0)
    b = board_mod.marker_corners_cw(spec, center_marker).mean(axis=0)
    return float(np.linalg.norm((a - b)[:2]))


def distance_study(ds: CalibrationDataset,
                   result: CalibrationResult | None = None,
                   spec: board_mod.BoardSpec | None = None
                   ) -> list[CurvePoint]:
    """Held-out-marker reprojection error versus board distance from the
    calibration marker. Calibration uses only center-marker volumes."""
    spec = spec or board_mod.BoardSpec()
    if not ds.other_marker_obs:
        raise NoHeldOutMarkers("distance study needs non-center markers")
    res = result or calibrate(ds.cfg, ds.cam_obs, ds.oct_obs)
    recs = reprojection_error(res.h_cg, res.h_og, ds.cam_obs,
                              ds.other_marker_obs, ds.cfg)
    rms = marker_rms(recs)
    by_dist: dict[float, list[float]] = {}
    for m, v in rms.items():
        d = round(marker_distance(spec, m, ds.center_marker), 6)
        by_dist.setdefault(d, []).append(v)
    curve = []
    for d in sorted(by_dist):
        vals = np.array(by_dist[d])
        curve.append(CurvePoint(d, float(vals.mean()), float(vals.std())))
    return curve


# --- repeatability --------------------------------------------------------------

_COMPONENTS = ("tx", "ty", "tz", "roll", "pitch", "yaw")


def transform_components(t: RigidTransform) -> np.ndarray:
    """(tx, ty, tz, roll, pitch, yaw) with angles in degrees."""
    e = rpy_from_rotation(t.rotation)
    return np.array([*t.translation, e.roll, e.pitch, e.yaw])


@dataclass(frozen=True)
class RepeatabilityRow:
    transform: str  # "h_cg" | "h_og"
    component: str  # tx/ty/tz mm, roll/pitch/yaw deg
    mean: float
    std: float


def _mean_rotation(rots: list[np.ndarray]) -> np.ndarray:
    """Chordal mean of rotations via sign-aligned quaternion averaging."""
    quats = np.array([quat_from_rotation(r) for r in rots])
    quats[quats @ quats[0] < 0] *= -1.0
    q = quats.mean(axis=0)
    return rotation_from_quat(q / np.linalg.norm(q))


def _reporting_branch(e: EulerRPY) -> EulerRPY:
    """Pick the ZYX branch with roll and yaw nearest zero for presentation.

    The two extractions (r, p, y) and (r-180, 180-p, y-180) describe the
    same rotation; for orientations pitched past 90 deg the principal
    branch puts roll/yaw near +/-180, so flip when both exceed 90.
    """
    if abs(e.roll) > 90.0 and abs(e.yaw) > 90.0:
        wrap = lambda a: a - 360.0 * np.round(a / 360.0)
        return EulerRPY(wrap(e.roll - 180.0), wrap(180.0 - e.pitch),
                        wrap(e.yaw - 180.0))
    return e


def repeatability(cfg: ScenarioConfig, runs: int, n_cam: int = 12,
                  n_oct: int = 12, render_oct: bool = True
                  ) -> list[RepeatabilityRow]:
    """Componentwise mean/std of both hand-eye estimates over repeated
    calibration runs with fresh noise draws per run.

    Orientation statistics are computed about the mean rotation: the std of
    each Euler component is taken from the roll/pitch/yaw of the per-run
    rotation relative to the chordal mean. Near-identity extraction keeps
    the spread well conditioned even when the mean orientation itself sits
    close to the ZYX gimbal degeneracy (pitch near 90 deg), where direct
    componentwise statistics would be dominated by parametrization blowup
    rather than measurement scatter.
    """
    if runs < 2:
        raise ValueError("repeatability needs at least 2 runs")
    samples: dict[str, list[RigidTransform]] = {"h_cg": [], "h_og": []}
    for r in range(runs):
        run_cfg = scenario_for_run(cfg, r)
        ds = build_dataset(run_cfg, n_cam, n_oct, render_oct=render_oct)
        res = calibrate(run_cfg, ds.cam_obs, ds.oct_obs)
        samples["h_cg"].append(res.h_cg)
        samples["h_og"].append(res.h_og)
    rows = []
    for name in ("h_cg", "h_og"):
        ts = np.array([t.translation for t in samples[name]])
        r_mean = _mean_rotation([t.rotation for t in samples[name]])
        deltas = np.array([
            [getattr(rpy_from_rotation(r_mean.T @ t.rotation), c)
             for c in ("roll", "pitch", "yaw")]
            for t in samples[name]])
        e_mean = _reporting_branch(rpy_from_rotation(r_mean))
        mu = np.concatenate([ts.mean(axis=0),
                             [e_mean.roll, e_mean.pitch, e_mean.yaw]])
        sd = np.concatenate([ts.std(axis=0, ddof=1),
                             deltas.std(axis=0, ddof=1)])
        for j, comp in enumerate(_COMPONENTS):
            rows.append(RepeatabilityRow(name, comp, float(mu[j]),
                                         float(sd[j])))
    return rows
