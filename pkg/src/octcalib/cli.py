"""Command-line interface: scenario-driven simulate/calibrate/eval/scan
pipelines that write deterministic JSON/CSV/PLY artifacts.

Every command fully computes its results before writing anything, emits all
floats with 9 significant digits, and finishes by writing a manifest with
sha256 checksums of the artifacts. Exit codes: 2 unreachable target,
3 insufficient motion, 4 empty point cloud, 5 malformed run.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import io
import json
import os
import sys
import zipfile
from pathlib import Path

import numpy as np

from . import board as board_mod
from . import evaluate as eval_mod
from . import scan as scan_mod
from .errors import (EmptyCloud, InsufficientMotion, MalformedRun,
                     UnreachableTarget)
from .geom import RigidTransform
from .pipeline import build_dataset, calibrate
from .report import fmt9, generate_report, write_csv, write_curve
from .sim import (CameraObservation, Observation, ScenarioConfig,
                  simulate_camera_observations, simulate_oct_observations)
from .volume import load_octv, save_octv


def _round9(obj):
    """Recursively clamp floats to 9 significant digits for serialization."""
    if isinstance(obj, float):
        return float(fmt9(obj))
    if isinstance(obj, dict):
        return {k: _round9(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round9(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(fmt9(float(obj)))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _round9(obj.tolist())
    return obj


def _dump_json(path: Path, obj) -> None:
    with open(path, "w") as f:
        json.dump(_round9(obj), f, indent=2, sort_keys=True)
        f.write("\n")


def _save_npz_deterministic(path: Path, **arrays) -> None:
    """npz writer with a fixed zip timestamp so equal inputs give equal bytes."""
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as z:
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asarray(arrays[name]))
            info = zipfile.ZipInfo(name + ".npy",
                                   date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            z.writestr(info, buf.getvalue())


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _scenario_sha(cfg: ScenarioConfig) -> str:
    blob = json.dumps(_round9(cfg.to_dict()), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def _write_manifest(out: Path, command: str, cfg: ScenarioConfig,
                    scenario_path) -> None:
    artifacts = {p.name: _sha256(p) for p in sorted(out.iterdir())
                 if p.is_file() and p.name != "manifest.json"}
    _dump_json(out / "manifest.json", {
        "command": command,
        "rng_seed": cfg.rng_seed,
        "scenario": str(scenario_path) if scenario_path else "(defaults)",
        "scenario_sha256": _scenario_sha(cfg),
        "output_dir": str(out),
        "artifacts": artifacts,
    })


def _load_scenario(args) -> ScenarioConfig:
    cfg = ScenarioConfig.load(args.scenario) if args.scenario \
        else ScenarioConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, rng_seed=args.seed)
    return cfg


def _out_dir(args, default: str) -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _limit_threads(args):
    n = args.threads if args.threads is not None else \
        int(os.environ.get("OCT_HANDEYE_THREADS", "0") or 0)
    if n > 0:
        try:
            from threadpoolctl import threadpool_limits
            return threadpool_limits(limits=n)
        except ImportError:
            for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                        "MKL_NUM_THREADS"):
                os.environ[var] = str(n)
    return None


# --- commands ------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = _load_scenario(args)
    out = _out_dir(args, "dataset")
    cam_obs = simulate_camera_observations(cfg, args.n_cam) \
        if args.n_cam > 0 else []
    if args.n_cam == 0:
        print("warning: n-cam=0, no camera observations emitted",
              file=sys.stderr)
    oct_obs = simulate_oct_observations(cfg, args.n_oct,
                                        marker_id=args.marker,
                                        render=not args.analytic) \
        if args.n_oct > 0 else []
    cfg.save(out / "scenario.json")
    poses = {
        "camera": [o.robot_pose_reported.as_flat() for o in cam_obs],
        "oct": [{"marker_id": o.marker_id,
                 "file": f"vol_{i:04d}.octv" if o.oct_volume is not None
                 else None,
                 "robot_pose_reported": o.robot_pose_reported.as_flat(),
                 "marker_points_o": None if o.oct_marker_points is None
                 else o.oct_marker_points.tolist()}
                for i, o in enumerate(oct_obs)],
    }
    _dump_json(out / "poses.json", poses)
    if cam_obs:
        _dump_json(out / "camera_obs.json",
                   [{"corner_indices": o.camera_corners.corner_indices.tolist(),
                     "pixels": o.camera_corners.pixels.tolist()}
                    for o in cam_obs])
    for i, o in enumerate(oct_obs):
        if o.oct_volume is not None:
            save_octv(out / f"vol_{i:04d}.octv", o.oct_volume)
    _write_manifest(out, "simulate", cfg, args.scenario)
    print(f"wrote dataset with {len(cam_obs)} camera and {len(oct_obs)} "
          f"OCT observations to {out}")
    return 0


def _load_dataset(dataset: Path):
    try:
        cfg = ScenarioConfig.load(dataset / "scenario.json")
        with open(dataset / "poses.json") as f:
            poses = json.load(f)
    except (OSError, json.JSONDecodeError, KeyError) as e:
        raise MalformedRun(f"{dataset}: {e}")
    cam_obs = []
    if (dataset / "camera_obs.json").exists():
        with open(dataset / "camera_obs.json") as f:
            cam_raw = json.load(f)
        if len(cam_raw) != len(poses["camera"]):
            raise MalformedRun("camera_obs.json inconsistent with poses.json")
        for flat, rec in zip(poses["camera"], cam_raw):
            pose = RigidTransform.from_flat(flat)
            cam = CameraObservation(np.asarray(rec["corner_indices"]),
                                    np.asarray(rec["pixels"], dtype=float))
            cam_obs.append(Observation(pose, pose, camera_corners=cam))
    oct_obs = []
    for rec in poses["oct"]:
        pose = RigidTransform.from_flat(rec["robot_pose_reported"])
        vol = load_octv(dataset / rec["file"]) if rec.get("file") else None
        pts = None if rec.get("marker_points_o") is None \
            else np.asarray(rec["marker_points_o"], dtype=float)
        if vol is None and pts is None:
            raise MalformedRun("OCT record lacks both volume and points")
        oct_obs.append(Observation(pose, pose, oct_volume=vol,
                                   oct_marker_points=pts,
                                   marker_id=rec["marker_id"]))
    return cfg, cam_obs, oct_obs


def _calibration_payload(res) -> dict:
    def tr(name, t):
        return {"flat": t.as_flat(),
                "components": eval_mod.transform_components(t).tolist()}
    return {
        "h_cg": tr("h_cg", res.h_cg),
        "h_og": tr("h_og", res.h_og),
        "camera_pose_residuals_px": [s.residual_px for s in res.camera_poses],
        "oct_pose_residuals_mm": [s.residual_mm for s in res.oct_poses],
        "motion_residuals": {
            "camera": [{"pair": list(m.index_pair), "rot_deg": m.rotation_deg,
                        "trans_mm": m.translation_mm}
                       for m in res.cam_motion_residuals],
            "oct": [{"pair": list(m.index_pair), "rot_deg": m.rotation_deg,
                     "trans_mm": m.translation_mm}
                    for m in res.oct_motion_residuals],
        },
    }


def cmd_calibrate(args) -> int:
    dataset = Path(args.dataset)
    cfg, cam_obs, oct_obs = _load_dataset(dataset)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, rng_seed=args.seed)
    res = calibrate(cfg, cam_obs, oct_obs)
    out = _out_dir(args, "calibration")
    _dump_json(out / "calibration.json", _calibration_payload(res))
    _write_manifest(out, "calibrate", cfg, args.scenario)
    print(f"wrote calibration to {out}")
    return 0


def _load_calibration(path) -> tuple[RigidTransform, RigidTransform]:
    try:
        with open(path) as f:
            data = json.load(f)
        return (RigidTransform.from_flat(data["h_cg"]["flat"]),
                RigidTransform.from_flat(data["h_og"]["flat"]))
    except (OSError, json.JSONDecodeError, KeyError) as e:
        raise MalformedRun(f"{path}: {e}")


def cmd_eval(args) -> int:
    cfg = _load_scenario(args)
    out = _out_dir(args, f"eval_{args.study}")
    files_before = set(p.name for p in out.iterdir())

    if args.study == "reproj":
        dcfg, cam_obs, oct_obs = _load_dataset(Path(args.dataset))
        h_cg, h_og = _load_calibration(args.calibration)
        recs = eval_mod.reprojection_error(h_cg, h_og, cam_obs, oct_obs, dcfg)
        mean, std = eval_mod.summarize(recs)
        write_csv(out / "reprojection.csv",
                  ["marker_id", "pose_i", "pose_k", "corner", "rmse_mm"],
                  [[r.marker_id, r.pose_i, r.pose_k, r.corner, r.rmse]
                   for r in recs])
        _dump_json(out / "reproj_summary.json",
                   {"mean_rmse_mm": mean, "std_rmse_mm": std,
                    "records": len(recs),
                    "per_marker_rms_mm": eval_mod.marker_rms(recs)})
        cfg = dcfg
    elif args.study == "plateau":
        n_values = list(range(3, args.n_max + 1))
        ds = build_dataset(cfg, n_cam=args.n_cam, n_oct=args.n_max,
                           n_heldout=args.n_heldout, render_oct=False)
        curve = eval_mod.plateau_study(ds, n_values)
        write_curve(out / "plateau.csv", curve, "n_volumes")
        _dump_json(out / "plateau.json",
                   {"x_name": "n_volumes",
                    "curve": [{"x": p.x, "mean_rmse": p.mean_rmse,
                               "std_rmse": p.std_rmse} for p in curve]})
    elif args.study == "distance":
        markers = tuple(int(m) for m in args.markers.split(","))
        ds = build_dataset(cfg, n_cam=args.n_cam, n_oct=args.n_oct,
                           other_markers=markers, render_oct=False)
        curve = eval_mod.distance_study(ds)
        write_curve(out / "distance.csv", curve, "distance_mm")
        _dump_json(out / "distance.json",
                   {"x_name": "distance_mm",
                    "curve": [{"x": p.x, "mean_rmse": p.mean_rmse,
                               "std_rmse": p.std_rmse} for p in curve]})
    else:  # repeatability
        rows = eval_mod.repeatability(cfg, args.runs, n_cam=args.n_cam,
                                      n_oct=args.n_oct,
                                      render_oct=not args.analytic)
        write_csv(out / "repeatability.csv",
                  ["transform", "component", "mean", "std"],
                  [[r.transform, r.component, r.mean, r.std] for r in rows])
        _dump_json(out / "repeatability.json",
                   {"runs": args.runs,
                    "rows": [dataclasses.asdict(r) for r in rows]})

    _write_manifest(out, f"eval-{args.study}", cfg, args.scenario)
    new = sorted(set(p.name for p in out.iterdir()) - files_before)
    print(f"wrote {', '.join(new)} to {out}")
    return 0


def cmd_scan(args) -> int:
    cfg = _load_scenario(args)
    if cfg.surface_model.kind != "sphere":
        raise MalformedRun("scan comparison expects a sphere scenario")
    h_cg, h_og = _load_calibration(args.calibration)
    center = np.asarray(cfg.surface_model.center, dtype=float)
    radius = cfg.surface_model.radius
    fov = cfg.fov  # (z, x, y) mm
    if args.mode == "full6d":
        plan = scan_mod.plan_6d_sphere(center, radius, standoff=fov[0] / 2,
                                       angular_grid=(args.n_theta,
                                                     args.n_phi),
                                       h_og=h_og,
                                       cap_angle_deg=args.cap_deg)
    else:
        lat = radius * np.sin(np.deg2rad(args.cap_deg))

        def estimate(x, y):
            rho2 = (x - center[0]) ** 2 + (y - center[1]) ** 2
            if rho2 >= radius * radius:
                return None
            return center[2] + float(np.sqrt(radius * radius - rho2))

        plan = scan_mod.plan_translation_raster(
            ((center[0] - lat, center[0] + lat),
             (center[1] - lat, center[1] + lat)),
            xy_step=args.xy_step,
            fixed_orientation=np.diag([1.0, -1.0, -1.0]),
            h_og=h_og, fov=fov, depth_servo=estimate,
            initial_depth=float(center[2] + radius))
    volumes = scan_mod.acquire_scan(cfg, plan, h_og,
                                    min_intensity=args.min_intensity)
    cloud = scan_mod.stitch(volumes, h_og, args.min_intensity)
    if not len(cloud):
        raise EmptyCloud("scan produced no surface points")
    fit = scan_mod.fit_sphere(cloud)
    cov = scan_mod.coverage_report(cloud, center, radius,
                                   cap_angle_deg=args.cap_deg)
    section = scan_mod.cross_section(cloud, center, (0.0, 1.0, 0.0),
                                     thickness=1.0)
    out = _out_dir(args, f"scan_{args.mode}")
    scan_mod.save_ply(out / "cloud.ply", cloud, binary=args.binary_ply)
    _save_npz_deterministic(out / "cloud.npz", points_rw=cloud.points_rw,
                            intensity=cloud.intensity,
                            source_volume=cloud.source_volume)
    _dump_json(out / "sphere_fit.json", {
        "mode": plan.mode,
        "center_mm": fit.center.tolist(),
        "radius_mm": fit.radius,
        "expected_radius_mm": radius,
        "mean_abs_residual_mm": float(np.abs(fit.residuals).mean()),
        "rms_residual_mm": float(np.sqrt(np.mean(fit.residuals ** 2))),
        "n_points": len(cloud), "n_volumes": len(volumes),
    })
    drop = cov.cell_theta_deg[~cov.occupied]
    _dump_json(out / "coverage.json", {
        "mode": plan.mode, "coverage": cov.coverage,
        "cap_angle_deg": args.cap_deg,
        "n_cells": int(cov.occupied.size),
        "n_dropout_cells": int((~cov.occupied).sum()),
        "dropout_theta_deg_min": float(drop.min()) if len(drop) else None,
        "dropout_theta_deg_median": float(np.median(drop)) if len(drop)
        else None,
    })
    write_csv(out / "cross_section.csv", ["u_mm", "v_mm"],
              [[float(u), float(v)] for u, v in section])
    _write_manifest(out, "scan", cfg, args.scenario)
    print(f"scan {plan.mode}: {len(cloud)} points, fitted radius "
          f"{fit.radius:.3f} mm, coverage {cov.coverage:.3f} -> {out}")
    return 0


def cmd_fit_sphere(args) -> int:
    cloud = scan_mod.load_ply(args.cloud)
    fit = scan_mod.fit_sphere(cloud)
    out = _out_dir(args, "sphere_fit")
    _dump_json(out / "sphere_fit.json", {
        "center_mm": fit.center.tolist(), "radius_mm": fit.radius,
        "mean_abs_residual_mm": float(np.abs(fit.residuals).mean()),
        "rms_residual_mm": float(np.sqrt(np.mean(fit.residuals ** 2))),
        "n_points": len(cloud),
    })
    print(f"fitted sphere: r={fit.radius:.4f} mm center="
          f"({fit.center[0]:.3f}, {fit.center[1]:.3f}, {fit.center[2]:.3f})")
    return 0


def cmd_export_ply(args) -> int:
    data = np.load(args.cloud)
    cloud = scan_mod.PointCloud(data["points_rw"], data["intensity"],
                                data["source_volume"])
    scan_mod.save_ply(args.output, cloud, binary=args.binary)
    print(f"wrote {len(cloud)} points to {args.output}")
    return 0


def cmd_board(args) -> int:
    spec = board_mod.BoardSpec()
    out = _out_dir(args, "board")
    features = []
    for mid in sorted(spec.dictionary):
        corners = board_mod.marker_corners_cw(spec, mid)
        features.append({
            "marker_id": mid,
            "code_bits": spec.dictionary[mid].astype(int).flatten().tolist(),
            "corners_cw_mm": corners.tolist(),
        })
    _dump_json(out / "board.json", {
        "cols": spec.cols, "rows": spec.rows,
        "square_edge_mm": spec.square_edge,
        "marker_edge_mm": spec.marker_edge,
        "checker_corners_cw_mm": board_mod.checker_corners_cw(spec).tolist(),
        "markers": features,
    })
    img = board_mod.rasterize_patch(
        spec, (0.0, 0.0, spec.cols * spec.square_edge,
               spec.rows * spec.square_edge), resolution=10.0, supersample=2)
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(8, 5.6))
    ax.imshow(img.T, origin="lower", cmap="gray", vmin=0, vmax=1)
    ax.set_title("calibration board (albedo)")
    fig.tight_layout()
    fig.savefig(out / "board.png", dpi=120)
    plt.close(fig)
    print(f"wrote board.json and board.png to {out}")
    return 0


def cmd_report(args) -> int:
    out = _out_dir(args, "report")
    written = generate_report(args.runs, out)
    print(f"wrote {', '.join(written)} to {out}")
    return 0


# --- argument parsing ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="octcalib",
        description="Simulation-grounded hand-eye calibration and surface "
                    "scanning toolkit for a robot-mounted OCT probe and "
                    "RGB-D camera.")
    p.add_argument("--scenario", help="scenario JSON path (defaults built in)")
    p.add_argument("--seed", type=int, help="override the scenario RNG seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int,
                   help="worker thread cap (env OCT_HANDEYE_THREADS)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="emit a synthetic dataset directory")
    s.add_argument("--n-cam", type=int, default=12)
    s.add_argument("--n-oct", type=int, default=12)
    s.add_argument("--marker", type=int, default=17)
    s.add_argument("--analytic", action="store_true",
                   help="skip volume rendering, emit marker corners directly")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("calibrate", help="hand-eye calibration of a dataset")
    c.add_argument("dataset")
    c.set_defaults(func=cmd_calibrate)

    e = sub.add_parser("eval", help="evaluation studies")
    esub = e.add_subparsers(dest="study", required=True)
    er = esub.add_parser("reproj")
    er.add_argument("dataset")
    er.add_argument("calibration")
    ep = esub.add_parser("plateau")
    ep.add_argument("--n-max", type=int, default=35)
    ep.add_argument("--n-heldout", type=int, default=8)
    ep.add_argument("--n-cam", type=int, default=15)
    ed = esub.add_parser("distance")
    ed.add_argument("--markers",
                    default="12,16,18,22,13,21,7,27,2,32,0,4,30,34")
    ed.add_argument("--n-cam", type=int, default=15)
    ed.add_argument("--n-oct", type=int, default=25)
    eq = esub.add_parser("repeatability")
    eq.add_argument("--runs", type=int, default=3)
    eq.add_argument("--n-cam", type=int, default=12)
    eq.add_argument("--n-oct", type=int, default=12)
    eq.add_argument("--analytic", action="store_true")
    for sp in (er, ep, ed, eq):
        sp.set_defaults(func=cmd_eval)

    sc = sub.add_parser("scan", help="sphere scanning comparison")
    sc.add_argument("mode", choices=["full6d", "translation3d"])
    sc.add_argument("calibration")
    sc.add_argument("--cap-deg", type=float, default=60.0)
    sc.add_argument("--n-theta", type=int, default=7)
    sc.add_argument("--n-phi", type=int, default=27)
    sc.add_argument("--xy-step", type=float, default=1.8)
    sc.add_argument("--min-intensity", type=float, default=0.3)
    sc.add_argument("--binary-ply", action="store_true")
    sc.set_defaults(func=cmd_scan)

    fs = sub.add_parser("fit-sphere", help="fit a sphere to a PLY cloud")
    fs.add_argument("cloud")
    fs.set_defaults(func=cmd_fit_sphere)

    ex = sub.add_parser("export-ply", help="convert a cloud.npz to PLY")
    ex.add_argument("cloud")
    ex.add_argument("output")
    ex.add_argument("--binary", action="store_true")
    ex.set_defaults(func=cmd_export_ply)

    b = sub.add_parser("board", help="board utilities")
    bsub = b.add_subparsers(dest="board_cmd", required=True)
    bd = bsub.add_parser("dump", help="dump geometry, codes, and a raster")
    bd.set_defaults(func=cmd_board)

    r = sub.add_parser("report", help="aggregate run dirs into tables+figures")
    r.add_argument("runs", nargs="+")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    limiter = _limit_threads(args)
    try:
        return args.func(args)
    except UnreachableTarget as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except InsufficientMotion as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except EmptyCloud as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except MalformedRun as e:
        print(f"error: {e}", file=sys.stderr)
        return 5
    finally:
        if limiter is not None:
            limiter.unregister()


if __name__ == "__main__":
    sys.exit(main())
