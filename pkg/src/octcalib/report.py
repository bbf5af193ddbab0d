"""Report generation: delimited summary tables plus rendered figures.

Consumes the artifacts written by the CLI commands (calibration runs,
study curves, scan outputs) and emits CSV tables alongside matplotlib PNG
figures in an output directory.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import MalformedRun  # noqa: E402


def fmt9(x: float) -> str:
    """Serialize a float with 9 significant digits."""
    return "%.9g" % float(x)


def write_csv(path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt9(v) if isinstance(v, float) else v for v in row])


def write_repeatability_table(path, rows) -> None:
    """Componentwise mean/std table for both hand-eye transforms."""
    write_csv(path, ["transform", "component", "mean", "std"],
              [[r.transform, r.component, r.mean, r.std] for r in rows])


def write_curve(path, curve, x_name: str) -> None:
    write_csv(path, [x_name, "mean_rmse_mm", "std_rmse_mm"],
              [[p.x, p.mean_rmse, p.std_rmse] for p in curve])


def plot_curve(path, curve, x_label: str, title: str) -> None:
    xs = [p.x for p in curve]
    ys = [p.mean_rmse for p in curve]
    es = [p.std_rmse for p in curve]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(xs, ys, yerr=es, marker="o", capsize=3)
    ax.set_xlabel(x_label)
    ax.set_ylabel("reprojection RMSE [mm]")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_repeatability(path, rows) -> None:
    labels = [f"{r.transform}.{r.component}" for r in rows]
    stds = [r.std for r in rows]
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.bar(range(len(rows)), stds)
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(labels, rotation=60, ha="right", fontsize=8)
    ax.set_ylabel("std over runs [mm | deg]")
    ax.set_title("Hand-eye repeatability")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_motion_residuals(path, per_run: list[tuple[str, dict]]) -> None:
    """AX-XB motion residuals of each calibration run, camera and OCT."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    for label, motion in per_run:
        for ax, branch in ((ax1, "camera"), (ax2, "oct")):
            vals = motion[branch]
            ax.plot([m["rot_deg"] for m in vals], marker=".", linestyle="-",
                    linewidth=0.8, label=label)
    for ax, branch in ((ax1, "camera"), (ax2, "oct")):
        ax.set_title(f"{branch} hand-eye motion residuals")
        ax.set_xlabel("motion pair index")
        ax.set_ylabel("rotation residual [deg]")
        ax.grid(True, alpha=0.3)
    if per_run:
        ax1.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_scan_comparison(path, summaries: dict[str, dict]) -> None:
    """Radius error and coverage per scan mode, side by side."""
    modes = sorted(summaries)
    r_err = [abs(summaries[m]["radius_mm"] - summaries[m]["expected_radius_mm"])
             for m in modes]
    cov = [summaries[m]["coverage"] for m in modes]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 4))
    ax1.bar(modes, r_err)
    ax1.set_ylabel("|fitted radius - nominal| [mm]")
    ax1.set_title("Sphere radius error")
    ax2.bar(modes, cov)
    ax2.set_ylim(0, 1.05)
    ax2.set_ylabel("cap coverage fraction")
    ax2.set_title("Surface coverage")
    for ax in (ax1, ax2):
        ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_cross_section(path, profile: np.ndarray, radius: float) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(profile[:, 0], profile[:, 1], ".", markersize=2, label="points")
    t = np.linspace(0, np.pi, 200)
    ax.plot(radius * np.cos(t), radius * np.sin(t), "r-", linewidth=0.8,
            label="nominal circle")
    ax.set_aspect("equal")
    ax.set_xlabel("u [mm]")
    ax.set_ylabel("v [mm]")
    ax.legend()
    ax.set_title("Cross section")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# --- multi-run aggregation -----------------------------------------------------


def _load_json(path: Path) -> dict:
    try:
        with open(path) as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise MalformedRun(f"{path}: {e}")


def generate_report(run_dirs: list, out_dir) -> list[str]:
    """Aggregate calibration/eval/scan run directories into tables+figures.

    Each run directory must carry a manifest naming its scenario checksum;
    mixing runs from different scenarios is refused. Returns the list of
    artifact filenames written.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs = [Path(d) for d in run_dirs]
    if not runs:
        raise MalformedRun("report needs at least one run directory")
    scenario_ids = set()
    payloads = []
    for d in runs:
        if not d.is_dir():
            raise MalformedRun(f"{d} is not a directory")
        manifest = _load_json(d / "manifest.json")
        for key in ("command", "rng_seed", "scenario_sha256", "artifacts"):
            if key not in manifest:
                raise MalformedRun(f"{d}: manifest missing {key!r}")
        scenario_ids.add(manifest["scenario_sha256"])
        payloads.append((d, manifest))
    if len(scenario_ids) > 1:
        raise MalformedRun("run directories mix different scenarios")

    written = []

    def emit_table(name, header, rows):
        write_csv(out / name, header, rows)
        written.append(name)

    # calibration runs -> Table-1-style mu/sigma over runs
    calib_dirs = [d for d, m in payloads if m["command"] == "calibrate"]
    calibs = [_load_json(d / "calibration.json") for d in calib_dirs]
    if calibs:
        from .evaluate import RepeatabilityRow, _COMPONENTS
        rows = []
        for name in ("h_cg", "h_og"):
            comps = np.array([c[name]["components"] for c in calibs])
            mu = comps.mean(axis=0)
            sd = comps.std(axis=0, ddof=1) if len(calibs) > 1 \
                else np.full(6, np.nan)
            for j, comp in enumerate(_COMPONENTS):
                rows.append(RepeatabilityRow(name, comp, float(mu[j]),
                                             float(sd[j])))
        header = ["transform", "component", "mean"]
        table = [[r.transform, r.component, r.mean] for r in rows]
        if len(calibs) > 1:
            header.append("std")
            for row, r in zip(table, rows):
                row.append(r.std)
        emit_table("calibration_summary.csv", header, table)
        if len(calibs) > 1:
            plot_repeatability(out / "calibration_repeatability.png", rows)
            written.append("calibration_repeatability.png")
        plot_motion_residuals(out / "calibration_motion_residuals.png",
                              [(d.name, c["motion_residuals"])
                               for d, c in zip(calib_dirs, calibs)])
        written.append("calibration_motion_residuals.png")

    # study curves are copied through with rendered figures
    for d, m in payloads:
        for stem, xlab, title in (("plateau", "OCT volumes used", "Error plateau"),
                                  ("distance", "marker distance [mm]",
                                   "Held-out marker error vs distance")):
            src = d / f"{stem}.json"
            if src.exists():
                data = _load_json(src)
                from .evaluate import CurvePoint
                curve = [CurvePoint(p["x"], p["mean_rmse"], p["std_rmse"])
                         for p in data["curve"]]
                write_curve(out / f"{stem}.csv", curve, data["x_name"])
                plot_curve(out / f"{stem}.png", curve, xlab, title)
                written += [f"{stem}.csv", f"{stem}.png"]

    # scan runs -> radius/coverage comparison
    scans = {}
    for d, m in payloads:
        if m["command"] == "scan":
            s = _load_json(d / "sphere_fit.json")
            c = _load_json(d / "coverage.json")
            scans[s["mode"]] = {"radius_mm": s["radius_mm"],
                                "expected_radius_mm": s["expected_radius_mm"],
                                "mean_abs_residual_mm": s["mean_abs_residual_mm"],
                                "coverage": c["coverage"]}
    if scans:
        emit_table("scan_summary.csv",
                   ["mode", "radius_mm", "expected_radius_mm",
                    "mean_abs_residual_mm", "coverage"],
                   [[m, v["radius_mm"], v["expected_radius_mm"],
                     v["mean_abs_residual_mm"], v["coverage"]]
                    for m, v in sorted(scans.items())])
        plot_scan_comparison(out / "scan_comparison.png", scans)
        written.append("scan_comparison.png")

    if not written:
        raise MalformedRun("no reportable artifacts in the given runs")
    return written
