import dataclasses

import numpy as np
import pytest

from octcalib import board as B
from octcalib import sim as sim_mod
from octcalib import volume as V
from octcalib.errors import SphereOutOfFov, UnreachableTarget
from octcalib.geom import (RigidTransform, compose, geodesic_angle, invert,
                           axis_angle_from_rotation)

TOP_DOWN = np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]])


def robot_for_probe_in_cw(cfg, h_o2cw):
    """Robot pose placing the probe at the given CW-frame pose."""
    return compose(cfg.board_pose_rw, compose(h_o2cw, invert(cfg.true_h_og)))


def probe_at(cfg, target_cw, rot):
    """Probe pose whose lateral-center ray hits ``target_cw`` at mid-depth."""
    center = sim_mod._lateral_center(cfg).copy()
    center[2] = cfg.fov[0] / 2.0
    return RigidTransform(rot, np.asarray(target_cw) - rot @ center)


class TestNoiseParams:
    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            sim_mod.NoiseParams(corner_px_sigma=-0.1)

    def test_zero_factory(self):
        z = sim_mod.NoiseParams.zero()
        assert all(v == 0.0 for v in z.__dict__.values())


class TestScenarioRoundtrip:
    def test_dict_roundtrip(self, cfg):
        again = sim_mod.ScenarioConfig.from_dict(cfg.to_dict())
        assert again.to_dict() == cfg.to_dict()

    def test_save_load(self, cfg, tmp_path):
        p = tmp_path / "scenario.json"
        cfg.save(p)
        assert sim_mod.ScenarioConfig.load(p).to_dict() == cfg.to_dict()


class TestSubstream:
    def test_deterministic_and_independent(self):
        a = sim_mod.substream(3, "x", 0).normal(size=4)
        assert np.array_equal(a, sim_mod.substream(3, "x", 0).normal(size=4))
        assert not np.array_equal(a, sim_mod.substream(3, "x", 1).normal(size=4))
        assert not np.array_equal(a, sim_mod.substream(3, "y", 0).normal(size=4))
        assert not np.array_equal(a, sim_mod.substream(4, "x", 0).normal(size=4))


class TestPoseSampler:
    def test_minimum_count(self, cfg):
        with pytest.raises(ValueError):
            sim_mod.sample_calibration_poses(cfg, 2, "camera_board")

    def test_deterministic_and_prefix_stable(self, cfg):
        a = sim_mod.sample_calibration_poses(cfg, 6, "camera_board")
        b = sim_mod.sample_calibration_poses(cfg, 8, "camera_board")
        for p, q in zip(a, b):
            assert np.allclose(p.as_flat(), q.as_flat())

    def test_camera_poses_keep_board_visible(self, quiet_cfg):
        for pose in sim_mod.sample_calibration_poses(quiet_cfg, 8,
                                                     "camera_board"):
            obs = sim_mod.observe_camera(quiet_cfg, pose)
            assert len(obs.corner_indices) == 54

    def test_oct_poses_keep_marker_in_fov(self, cfg, spec):
        corners = B.marker_corners_cw(spec, 17)
        fz, fx, fy = cfg.fov
        for pose in sim_mod.sample_calibration_poses(cfg, 8, "oct_marker"):
            p_o = sim_mod.oct_pose_for_robot(cfg, pose).apply(corners)
            assert np.all((p_o[:, 0] >= 0) & (p_o[:, 0] <= fx))
            assert np.all((p_o[:, 1] >= 0) & (p_o[:, 1] <= fy))
            assert np.all((p_o[:, 2] >= 0) & (p_o[:, 2] <= fz))

    def test_axis_diversity(self, cfg):
        poses = sim_mod.sample_calibration_poses(cfg, 6, "oct_marker")
        axes = []
        for p in poses[1:]:
            rel = compose(invert(poses[0]), p)
            axis, angle = axis_angle_from_rotation(rel.rotation)
            if angle > 1e-7:
                axes.append(axis)
        dots = [abs(a @ b) for i, a in enumerate(axes) for b in axes[i + 1:]]
        assert min(dots) < np.cos(np.deg2rad(5.0))

    def test_common_axis_mode_collapses_axes(self, cfg):
        poses = sim_mod.sample_calibration_poses(cfg, 5, "oct_marker",
                                                 force_common_axis=True)
        axes = []
        for p in poses[1:]:
            rel = compose(invert(poses[0]), p)
            axis, angle = axis_angle_from_rotation(rel.rotation)
            if angle > 1e-7:
                axes.append(axis)
        assert all(abs(a @ b) > np.cos(np.deg2rad(5.0))
                   for i, a in enumerate(axes) for b in axes[i + 1:])

    def test_unreachable_target(self, cfg):
        tiny = dataclasses.replace(cfg, image_size=(40, 30))
        with pytest.raises(UnreachableTarget):
            sim_mod.sample_calibration_poses(tiny, 3, "camera_board",
                                             max_tries=20)


class TestPerturbation:
    def test_zero_noise_identity(self, quiet_cfg):
        pose = RigidTransform(np.eye(3), np.array([1.0, 2.0, 3.0]))
        rng = np.random.default_rng(0)
        out = sim_mod.perturb_robot_pose(quiet_cfg, pose, rng)
        assert np.allclose(out.as_flat(), pose.as_flat())

    def test_noise_sigma_within_10_percent(self, cfg):
        pose = RigidTransform(np.eye(3), np.zeros(3))
        rng = np.random.default_rng(1)
        n = 3000
        dts, angles = [], []
        for _ in range(n):
            out = sim_mod.perturb_robot_pose(cfg, pose, rng)
            dts.append(out.translation)
            angles.append(geodesic_angle(np.eye(3), out.rotation))
        assert np.std(np.asarray(dts)) == pytest.approx(
            cfg.noise.robot_trans_sigma, rel=0.1)
        # angle magnitude is |N(0, sigma)|: RMS equals sigma
        rms = np.sqrt(np.mean(np.square(np.degrees(angles))))
        assert rms == pytest.approx(cfg.noise.robot_rot_sigma, rel=0.1)


class TestObserveCamera:
    def test_noiseless_matches_projection(self, quiet_cfg, spec):
        pose = sim_mod.sample_calibration_poses(quiet_cfg, 3,
                                                "camera_board")[0]
        obs = sim_mod.observe_camera(quiet_cfg, pose)
        h_ci = sim_mod.camera_pose_for_robot(quiet_cfg, pose)
        expect = quiet_cfg.intrinsics.project(
            h_ci.apply(B.checker_corners_cw(spec)))
        assert np.allclose(obs.pixels, expect[obs.corner_indices], atol=1e-9)

    def test_pixel_noise_sigma(self, cfg, spec):
        pose = sim_mod.sample_calibration_poses(cfg, 3, "camera_board")[0]
        h_ci = sim_mod.camera_pose_for_robot(cfg, pose)
        expect = cfg.intrinsics.project(h_ci.apply(B.checker_corners_cw(spec)))
        rng = np.random.default_rng(2)
        resid = []
        for _ in range(60):
            obs = sim_mod.observe_camera(cfg, pose, rng)
            resid.append((obs.pixels - expect[obs.corner_indices]).ravel())
        sigma = np.std(np.concatenate(resid))
        assert sigma == pytest.approx(cfg.noise.corner_px_sigma, rel=0.1)


class TestRenderBoard:
    def test_plane_depth_at_mid_fov(self, quiet_cfg, spec):
        m = spec.marker_center_cw(17)
        pose = robot_for_probe_in_cw(quiet_cfg, probe_at(quiet_cfg, m,
                                                         TOP_DOWN))
        vol = sim_mod.render_oct_board(quiet_cfg, pose)
        ef = V.enface_max_projection(vol)
        depth = V.subpixel_depth_map(vol, ef)
        cx = quiet_cfg.volume_dims[1] // 2
        mid_mm = depth[cx, cx] * quiet_cfg.volume_spacing[0]
        assert mid_mm == pytest.approx(quiet_cfg.fov[0] / 2.0, abs=0.01)

    def test_energy_locality(self, quiet_cfg, spec):
        # integral of the axial Gaussian: amp * sigma_mm * sqrt(2 pi)
        m = spec.marker_center_cw(17)
        pose = robot_for_probe_in_cw(quiet_cfg, probe_at(quiet_cfg, m,
                                                         TOP_DOWN))
        vol = sim_mod.render_oct_board(quiet_cfg, pose)
        dz = quiet_cfg.volume_spacing[0]
        # white cell well away from the embedded marker
        col = vol.intensities[:, 8, 8]
        energy = float(col.sum()) * dz
        amp = B.WHITE_LEVEL  # normal incidence: cos^p = 1
        expect = amp * quiet_cfg.axial_sigma_vox * dz * np.sqrt(2 * np.pi)
        assert energy == pytest.approx(expect, rel=0.01)

    def test_cutoff_angle_drops_signal(self, quiet_cfg, spec):
        m = spec.marker_center_cw(17)
        a = np.radians(60.0)  # past the 55 deg cutoff
        d = np.array([np.sin(a), 0.0, -np.cos(a)])
        rot = sim_mod._frame_looking_along(d, 0.0)
        pose = robot_for_probe_in_cw(quiet_cfg, probe_at(quiet_cfg, m, rot))
        vol = sim_mod.render_oct_board(quiet_cfg, pose)
        assert vol.intensities.max() < quiet_cfg.min_intensity

    def test_render_deterministic(self, cfg, spec):
        m = spec.marker_center_cw(17)
        pose = robot_for_probe_in_cw(cfg, probe_at(cfg, m, TOP_DOWN))
        a = sim_mod.render_oct_board(cfg, pose, sim_mod.substream(1, "r"))
        b = sim_mod.render_oct_board(cfg, pose, sim_mod.substream(1, "r"))
        assert np.array_equal(a.intensities, b.intensities)


class TestRenderSphere:
    def _apex_pose(self, cfg):
        sm = cfg.surface_model
        apex = np.asarray(sm.center) + [0.0, 0.0, sm.radius]
        center = sim_mod._lateral_center(cfg).copy()
        center[2] = cfg.fov[0] / 2.0
        h_o2rw = RigidTransform(TOP_DOWN, apex - TOP_DOWN @ center)
        return compose(h_o2rw, invert(cfg.true_h_og))

    def test_apex_amplitude_is_white(self, small_sphere_cfg):
        cfg = small_sphere_cfg.with_zero_noise()
        vol = sim_mod.render_oct_sphere(cfg, self._apex_pose(cfg))
        cx = cfg.volume_dims[1] // 2
        assert vol.intensities[:, cx, cx].max() == pytest.approx(
            B.WHITE_LEVEL, abs=0.01)

    def test_apex_depth(self, small_sphere_cfg):
        cfg = small_sphere_cfg.with_zero_noise()
        vol = sim_mod.render_oct_sphere(cfg, self._apex_pose(cfg))
        ef = V.enface_max_projection(vol)
        depth = V.subpixel_depth_map(vol, ef)
        cx = cfg.volume_dims[1] // 2
        assert depth[cx, cx] * cfg.volume_spacing[0] == pytest.approx(
            cfg.fov[0] / 2.0, abs=0.01)

    def test_missed_sphere_raises(self, small_sphere_cfg):
        cfg = small_sphere_cfg.with_zero_noise()
        sm = cfg.surface_model
        # lateral offset so no ray line passes near the sphere
        away = np.asarray(sm.center) + [500.0, 0.0, sm.radius + 50.0]
        h_o2rw = RigidTransform(TOP_DOWN, away)
        pose = compose(h_o2rw, invert(cfg.true_h_og))
        with pytest.raises(SphereOutOfFov):
            sim_mod.render_oct_sphere(cfg, pose)


class TestAnalyticOct:
    def test_matches_true_chain(self, quiet_cfg, spec):
        pose = sim_mod.sample_calibration_poses(quiet_cfg, 3, "oct_marker")[0]
        p_o = sim_mod.observe_oct_analytic(quiet_cfg, pose, 17)
        expect = sim_mod.oct_pose_for_robot(quiet_cfg, pose).apply(
            B.marker_corners_cw(spec, 17))
        assert np.allclose(p_o, expect, atol=1e-12)

    def test_corner_noise_sigma(self, cfg, spec):
        pose = sim_mod.sample_calibration_poses(cfg, 3, "oct_marker")[0]
        expect = sim_mod.oct_pose_for_robot(cfg, pose).apply(
            B.marker_corners_cw(spec, 17))
        rng = np.random.default_rng(3)
        resid = [sim_mod.observe_oct_analytic(cfg, pose, 17, rng) - expect
                 for _ in range(300)]
        sigma = np.std(np.stack(resid))
        assert sigma == pytest.approx(cfg.noise.oct_corner_mm_sigma, rel=0.1)
