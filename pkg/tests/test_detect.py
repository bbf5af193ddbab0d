import numpy as np
import pytest

from octcalib import board as B
from octcalib import detect as D
from octcalib.errors import BoardNotFound, RejectBorder, RejectNoMatch


def render_rotated_view(spec, center_cw, angle_deg, resolution, shape,
                        supersample=3, noise=0.0, rng=None):
    """Render the board around ``center_cw`` rotated by ``angle_deg``.

    Pixel (u, v) samples board point center + R(angle) @ ((u, v) - c) / res
    where c is the image center. Returns (image, cw_to_px callable).
    """
    a = np.radians(angle_deg)
    r = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    cpx = (np.array(shape, dtype=float) - 1.0) / 2.0
    ss = supersample
    off = (np.arange(ss) + 0.5) / ss - 0.5
    u = (np.arange(shape[0])[:, None] + off[None, :]).reshape(-1)
    v = (np.arange(shape[1])[:, None] + off[None, :]).reshape(-1)
    gu, gv = np.meshgrid(u, v, indexing="ij")
    d = np.stack([gu - cpx[0], gv - cpx[1]], axis=-1) / resolution
    xy = d @ r.T + np.asarray(center_cw)[:2]
    img = B.albedo(spec, xy[..., 0], xy[..., 1])
    img = img.reshape(shape[0], ss, shape[1], ss).mean(axis=(1, 3))
    if noise > 0.0:
        img = img + rng.normal(scale=noise, size=img.shape)

    def cw_to_px(pts_cw):
        pts = np.asarray(pts_cw, dtype=float)[:, :2] - np.asarray(center_cw)[:2]
        return pts @ r * resolution + cpx  # (R^-1 d)*res + c, R^-1 = R^T

    return img, cw_to_px


class TestBinarize:
    def test_constant_is_background(self):
        assert not D.binarize(np.full((20, 20), 0.5)).any()

    def test_invert_recovers_same_mask(self, spec):
        img = B.rasterize_patch(spec, (0, 0, 40, 40), 2.0)
        a = D.binarize(img)
        b = D.binarize(img.max() + img.min() - img, invert=True)
        assert np.array_equal(a, b)

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            D.binarize(np.zeros((0, 0)))


class TestFindQuads:
    def test_single_square_found(self):
        # quads are dark (False) regions on a bright background
        mask = np.ones((40, 40), dtype=bool)
        mask[10:30, 12:28] = False
        quads = D.find_quads(mask)
        assert len(quads) == 1
        area = 0.5 * abs(np.dot(quads[0][:, 0], np.roll(quads[0][:, 1], -1))
                         - np.dot(quads[0][:, 1], np.roll(quads[0][:, 0], -1)))
        assert area == pytest.approx(20 * 16, rel=0.15)

    def test_min_area_rejects_small(self):
        mask = np.ones((40, 40), dtype=bool)
        mask[10:13, 10:13] = False
        assert D.find_quads(mask, min_area=25.0) == []


class TestDecode:
    def test_reject_flat_patch(self, spec):
        img = np.full((30, 30), 0.9)
        with pytest.raises(RejectBorder):
            D.decode_marker(img, [[5, 5], [5, 25], [25, 25], [25, 5]],
                            spec.dictionary)

    def test_reject_unknown_payload(self, spec):
        # black border around an all-white payload: no dictionary code is
        # all-ones (it would be within distance 4 of its own mirror)
        cell = 4
        img = np.zeros((6 * cell, 6 * cell))
        img[cell:-cell, cell:-cell] = 1.0
        quad = np.array([[0, 0], [0, 6 * cell], [6 * cell, 6 * cell],
                         [6 * cell, 0]], dtype=float) - 0.5
        with pytest.raises(RejectNoMatch):
            D.decode_marker(img, quad, spec.dictionary)

    def test_roundtrip_all_rotations(self, spec):
        rng = np.random.default_rng(0)
        for angle in (0.0, 17.0, 45.0, -45.0, 90.0):
            center = spec.marker_center_cw(17)
            img, cw_to_px = render_rotated_view(
                spec, center, angle, resolution=8.0, shape=(80, 80),
                noise=0.01, rng=rng)
            dets = D.detect_markers(img, spec.dictionary)
            ids = {d.marker_id for d in dets}
            assert 17 in ids
            det = next(d for d in dets if d.marker_id == 17)
            expect = cw_to_px(B.marker_corners_cw(spec, 17))
            rms = np.sqrt(np.mean((det.corners_px - expect) ** 2))
            assert rms < 0.25, (angle, rms)


class TestRefinement:
    @staticmethod
    def _checker(shape, corner, angle_deg=0.0):
        """Anti-aliased 2x2 checker saddle at a subpixel location."""
        a = np.radians(angle_deg)
        u, v = np.meshgrid(np.arange(shape[0], dtype=float),
                           np.arange(shape[1], dtype=float), indexing="ij")
        du = (u - corner[0]) * np.cos(a) + (v - corner[1]) * np.sin(a)
        dv = -(u - corner[0]) * np.sin(a) + (v - corner[1]) * np.cos(a)
        soft = lambda t: 0.5 * (1.0 + np.tanh(2.0 * t))
        return soft(du) * soft(dv) + (1 - soft(du)) * (1 - soft(dv))

    def test_saddle_refinement_accuracy(self):
        truth = np.array([15.3, 14.6])
        img = self._checker((31, 31), truth, angle_deg=20.0)
        refined, ok = D.refine_corners_subpixel(img, [[15.0, 15.0]])
        assert ok[0]
        assert np.linalg.norm(refined[0] - truth) < 0.05

    def test_edge_line_refinement_accuracy(self):
        # anti-aliased bright square with known subpixel corners
        u, v = np.meshgrid(np.arange(60, dtype=float),
                           np.arange(60, dtype=float), indexing="ij")
        soft = lambda t: 0.5 * (1.0 + np.tanh(2.0 * t))
        c0, c1 = np.array([12.35, 14.71]), np.array([45.18, 43.62])
        img = (soft(u - c0[0]) * soft(c1[0] - u)
               * soft(v - c0[1]) * soft(c1[1] - v))
        quad = np.array([[12.0, 15.0], [12.0, 44.0], [45.0, 44.0],
                         [45.0, 15.0]])
        out = D.refine_quad_edges(img, quad)
        expect = np.array([[c0[0], c0[1]], [c0[0], c1[1]],
                           [c1[0], c1[1]], [c1[0], c0[1]]])
        assert np.max(np.linalg.norm(out - expect, axis=1)) < 0.05

    def test_refinement_failure_returns_input(self):
        quad = np.array([[5.0, 5.0], [5.0, 20.0], [20.0, 20.0], [20.0, 5.0]])
        out = D.refine_quad_edges(np.zeros((30, 30)), quad)
        assert np.array_equal(out, quad)


class TestCheckerCorners:
    def test_full_board_recovery(self, spec):
        img = B.rasterize_patch(spec, (-5, -5, 105, 75), resolution=4.0,
                                supersample=3)
        found = D.detect_checker_corners(img, spec)
        lattice = B.checker_corners_cw(spec)
        assert len(found) >= 0.8 * len(lattice)
        for idx, px in found:
            # pixel i is centered at x0 + (i + 0.5) / resolution
            expect = (lattice[idx][:2] + 5.0) * 4.0 - 0.5
            assert np.linalg.norm(px - expect) < 0.25

    def test_blank_image_raises(self, spec):
        with pytest.raises(BoardNotFound):
            D.detect_checker_corners(np.zeros((50, 50)), spec)
