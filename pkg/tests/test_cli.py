import dataclasses
import hashlib
import json

import numpy as np
import pytest

from octcalib import cli
from octcalib import sim as sim_mod
from octcalib.evaluate import transform_components
from octcalib.geom import RigidTransform


def run(*argv):
    return cli.main([str(a) for a in argv])


def sha256(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def analytic_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("ds")
    code = run("--seed", 7, "--out", out, "simulate",
               "--n-cam", 6, "--n-oct", 6, "--analytic")
    assert code == 0
    return out


@pytest.fixture(scope="module")
def calibration_dir(analytic_dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("cal")
    assert run("--out", out, "calibrate", analytic_dataset) == 0
    return out


@pytest.fixture(scope="module")
def sphere_scenario(tmp_path_factory):
    """Sphere scenario at coarse volume resolution, saved to JSON."""
    cfg = dataclasses.replace(
        sim_mod.ScenarioConfig(rng_seed=5),
        volume_dims=(32, 32, 32),
        volume_spacing=(2.66 / 32, 10.0 / 32, 10.0 / 32),
        surface_model=sim_mod.SurfaceModel(kind="sphere"))
    path = tmp_path_factory.mktemp("scen") / "sphere.json"
    cfg.save(path)
    return path, cfg


@pytest.fixture(scope="module")
def true_calibration(sphere_scenario, tmp_path_factory):
    """calibration.json holding the scenario's exact hand-eye transforms."""
    _, cfg = sphere_scenario
    path = tmp_path_factory.mktemp("truecal") / "calibration.json"
    payload = {name: {"flat": t.as_flat(),
                      "components": transform_components(t).tolist()}
               for name, t in (("h_cg", cfg.true_h_cg),
                               ("h_og", cfg.true_h_og))}
    path.write_text(json.dumps(payload))
    return path


class TestSimulate:
    def test_artifacts_and_manifest(self, analytic_dataset):
        names = {p.name for p in analytic_dataset.iterdir()}
        assert {"scenario.json", "poses.json", "camera_obs.json",
                "manifest.json"} <= names
        manifest = json.loads((analytic_dataset / "manifest.json").read_text())
        assert manifest["command"] == "simulate"
        assert manifest["rng_seed"] == 7
        for name, digest in manifest["artifacts"].items():
            assert sha256(analytic_dataset / name) == digest
        assert "manifest.json" not in manifest["artifacts"]

    def test_poses_have_9_sig_digits(self, analytic_dataset):
        poses = json.loads((analytic_dataset / "poses.json").read_text())
        for flat in poses["camera"]:
            for v in flat:
                assert float("%.9g" % v) == v

    def test_deterministic(self, analytic_dataset, tmp_path):
        out = tmp_path / "again"
        assert run("--seed", 7, "--out", out, "simulate",
                   "--n-cam", 6, "--n-oct", 6, "--analytic") == 0
        for name in ("scenario.json", "poses.json", "camera_obs.json"):
            assert (out / name).read_bytes() == \
                (analytic_dataset / name).read_bytes()

    def test_unreachable_target_exit_2(self, tmp_path):
        cfg = dataclasses.replace(sim_mod.ScenarioConfig(rng_seed=1),
                                  image_size=(40, 30))
        scen = tmp_path / "tiny.json"
        cfg.save(scen)
        assert run("--scenario", scen, "--out", tmp_path / "o",
                   "simulate", "--n-cam", 3, "--n-oct", 0) == 2


class TestCalibrate:
    def test_recovers_truth_zero_noiseless_floor(self, calibration_dir):
        data = json.loads((calibration_dir / "calibration.json").read_text())
        assert set(data) >= {"h_cg", "h_og", "motion_residuals"}
        cfg = sim_mod.ScenarioConfig(rng_seed=7)
        h_og = RigidTransform.from_flat(data["h_og"]["flat"])
        # 6 noisy analytic poses: within ~1 mm of the ground truth
        assert np.linalg.norm(h_og.translation
                              - cfg.true_h_og.translation) < 1.5

    def test_insufficient_motion_exit_3(self, analytic_dataset, tmp_path):
        broken = tmp_path / "broken"
        broken.mkdir()
        for name in ("scenario.json", "camera_obs.json"):
            (broken / name).write_bytes((analytic_dataset / name).read_bytes())
        poses = json.loads((analytic_dataset / "poses.json").read_text())
        first = poses["oct"][0]["robot_pose_reported"]
        for rec in poses["oct"]:
            rec["robot_pose_reported"] = first  # no relative rotation left
        (broken / "poses.json").write_text(json.dumps(poses))
        assert run("--out", tmp_path / "o", "calibrate", broken) == 3

    def test_missing_dataset_exit_5(self, tmp_path):
        assert run("--out", tmp_path / "o", "calibrate",
                   tmp_path / "nope") == 5


class TestEval:
    def test_reproj(self, analytic_dataset, calibration_dir, tmp_path):
        out = tmp_path / "reproj"
        assert run("--out", out, "eval", "reproj", analytic_dataset,
                   calibration_dir / "calibration.json") == 0
        summary = json.loads((out / "reproj_summary.json").read_text())
        assert 0.0 <= summary["mean_rmse_mm"] < 1.0
        header = (out / "reprojection.csv").read_text().splitlines()[0]
        assert header == "marker_id,pose_i,pose_k,corner,rmse_mm"

    def test_plateau_small(self, tmp_path):
        out = tmp_path / "plateau"
        assert run("--seed", 3, "--out", out, "eval", "plateau",
                   "--n-max", 6, "--n-heldout", 3, "--n-cam", 6) == 0
        curve = json.loads((out / "plateau.json").read_text())["curve"]
        assert [p["x"] for p in curve] == [3, 4, 5, 6]

    def test_distance_small(self, tmp_path):
        out = tmp_path / "distance"
        assert run("--seed", 3, "--out", out, "eval", "distance",
                   "--markers", "16,18", "--n-cam", 6, "--n-oct", 6) == 0
        curve = json.loads((out / "distance.json").read_text())["curve"]
        assert len(curve) == 1 and curve[0]["x"] == 20.0

    def test_repeatability_small(self, tmp_path):
        out = tmp_path / "rep"
        assert run("--seed", 3, "--out", out, "eval", "repeatability",
                   "--runs", 2, "--n-cam", 6, "--n-oct", 6,
                   "--analytic") == 0
        rows = json.loads((out / "repeatability.json").read_text())["rows"]
        assert len(rows) == 12


class TestScan:
    def test_full6d_small(self, sphere_scenario, true_calibration, tmp_path):
        scen, cfg = sphere_scenario
        out = tmp_path / "scan6d"
        assert run("--scenario", scen, "--out", out, "scan", "full6d",
                   true_calibration, "--n-theta", 3, "--n-phi", 8,
                   "--cap-deg", 40) == 0
        fit = json.loads((out / "sphere_fit.json").read_text())
        assert fit["mode"] == "full6d"
        assert abs(fit["radius_mm"] - 50.0) < 1.0
        names = {p.name for p in out.iterdir()}
        assert {"cloud.ply", "cloud.npz", "sphere_fit.json",
                "coverage.json", "cross_section.csv",
                "manifest.json"} <= names

    def test_empty_cloud_exit_4(self, sphere_scenario, true_calibration,
                                tmp_path):
        scen, _ = sphere_scenario
        assert run("--scenario", scen, "--out", tmp_path / "o", "scan",
                   "full6d", true_calibration, "--n-theta", 2,
                   "--n-phi", 4, "--cap-deg", 30,
                   "--min-intensity", 1.1) == 4

    def test_plane_scenario_rejected_exit_5(self, true_calibration, tmp_path):
        cfg = dataclasses.replace(sim_mod.ScenarioConfig(rng_seed=1),
                                  surface_model=sim_mod.SurfaceModel(
                                      kind="plane"))
        scen = tmp_path / "plane.json"
        cfg.save(scen)
        assert run("--scenario", scen, "--out", tmp_path / "o", "scan",
                   "full6d", true_calibration) == 5


class TestSphereTools:
    def test_export_and_fit(self, tmp_path):
        rng = np.random.default_rng(0)
        u = rng.uniform(-1, 1, size=300)
        phi = rng.uniform(0, 2 * np.pi, size=300)
        s = np.sqrt(1 - u ** 2)
        pts = 50.0 * np.column_stack([s * np.cos(phi), s * np.sin(phi), u])
        npz = tmp_path / "cloud.npz"
        np.savez_compressed(npz, points_rw=pts, intensity=np.ones(300),
                            source_volume=np.zeros(300, dtype=int))
        ply = tmp_path / "cloud.ply"
        assert run("export-ply", npz, ply) == 0
        out = tmp_path / "fit"
        assert run("--out", out, "fit-sphere", ply) == 0
        fit = json.loads((out / "sphere_fit.json").read_text())
        assert fit["radius_mm"] == pytest.approx(50.0, abs=1e-3)


class TestBoardDump:
    def test_dump(self, tmp_path):
        out = tmp_path / "board"
        assert run("--out", out, "board", "dump") == 0
        data = json.loads((out / "board.json").read_text())
        assert len(data["markers"]) == 35
        assert (out / "board.png").stat().st_size > 0


class TestReport:
    def test_aggregates_calibrations(self, calibration_dir, tmp_path):
        out = tmp_path / "report"
        assert run("--out", out, "report", calibration_dir) == 0
        names = {p.name for p in out.iterdir()}
        assert any(n.endswith(".csv") for n in names)
        assert any(n.endswith(".png") for n in names)

    def test_missing_manifest_exit_5(self, tmp_path):
        bogus = tmp_path / "bogus"
        bogus.mkdir()
        (bogus / "calibration.json").write_text("{}")
        assert run("--out", tmp_path / "o", "report", bogus) == 5

    def test_mixed_scenarios_rejected_exit_5(self, calibration_dir,
                                             analytic_dataset, tmp_path):
        other_ds = tmp_path / "ds2"
        assert run("--seed", 99, "--out", other_ds, "simulate",
                   "--n-cam", 6, "--n-oct", 6, "--analytic") == 0
        other_cal = tmp_path / "cal2"
        assert run("--out", other_cal, "calibrate", other_ds) == 0
        assert run("--out", tmp_path / "o", "report", calibration_dir,
                   other_cal) == 5
