import numpy as np
import pytest

from octcalib import volume as V
from octcalib.errors import OutOfBounds, VolumeTooSmall
from octcalib.geom import RigidTransform

IDENT = RigidTransform(np.eye(3), np.zeros(3))


def make_volume(data, spacing=(0.02, 0.08, 0.08)):
    return V.OctVolume(np.asarray(data, dtype=np.float32), spacing, IDENT)


def median_oracle(data):
    """Brute-force 3x3x3 median with replicated borders: sort 27 samples."""
    nz, nx, ny = data.shape
    out = np.empty_like(data)
    for z in range(nz):
        for x in range(nx):
            for y in range(ny):
                vals = []
                for dz in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        for dy in (-1, 0, 1):
                            zz = min(max(z + dz, 0), nz - 1)
                            xx = min(max(x + dx, 0), nx - 1)
                            yy = min(max(y + dy, 0), ny - 1)
                            vals.append(data[zz, xx, yy])
                out[z, x, y] = sorted(vals)[13]
    return out


def enface_oracle(data):
    """Naive per-column argmax with first-maximum tie-break."""
    nz, nx, ny = data.shape
    img = np.empty((nx, ny), dtype=data.dtype)
    idx = np.empty((nx, ny), dtype=int)
    for x in range(nx):
        for y in range(ny):
            best, bi = data[0, x, y], 0
            for z in range(1, nz):
                if data[z, x, y] > best:
                    best, bi = data[z, x, y], z
            img[x, y], idx[x, y] = best, bi
    return img, idx


class TestOracles:
    def test_median_filter_matches_bruteforce(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            data = rng.random((8, 8, 8), dtype=np.float32)
            got = V.median_filter_3(make_volume(data)).intensities
            assert np.array_equal(got, median_oracle(data))

    def test_enface_matches_bruteforce_with_ties(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            # quantized values force duplicate maxima within columns
            data = (rng.integers(0, 4, size=(8, 8, 8)) / 4.0).astype(np.float32)
            ef = V.enface_max_projection(make_volume(data))
            img, idx = enface_oracle(data)
            assert np.array_equal(ef.image, img)
            assert np.array_equal(ef.depth_index, idx)


class TestVolume:
    def test_too_small(self):
        with pytest.raises(VolumeTooSmall):
            V.median_filter_3(make_volume(np.zeros((2, 8, 8))))

    def test_dims_and_fov(self):
        v = make_volume(np.zeros((4, 8, 16)), spacing=(0.5, 0.25, 0.125))
        assert v.dims == (4, 8, 16)
        assert np.allclose(v.fov, (2.0, 2.0, 2.0))

    def test_intensities_readonly(self):
        v = make_volume(np.zeros((3, 3, 3)))
        with pytest.raises(ValueError):
            v.intensities[0, 0, 0] = 1.0


class TestExtractSurface:
    def test_points_at_expected_depth(self):
        data = np.zeros((8, 4, 4), dtype=np.float32)
        data[5] = 1.0
        sp = V.extract_surface(make_volume(data), 0.5)
        assert len(sp.points_o) == 16
        assert np.allclose(sp.points_o[:, 2], 5 * 0.02)
        assert sp.mask.all()

    def test_threshold_filters(self):
        data = np.zeros((4, 2, 2), dtype=np.float32)
        data[1, 0, 0] = 0.9
        data[2, 1, 1] = 0.2
        sp = V.extract_surface(make_volume(data), 0.5)
        assert len(sp.points_o) == 1
        assert sp.intensity[0] == pytest.approx(0.9)


class TestSubpixelDepth:
    def test_gaussian_peak_recovered_exactly(self):
        zs = np.arange(16.0)
        true = 7.3
        profile = np.exp(-0.5 * ((zs - true) / 2.0) ** 2)
        data = np.tile(profile[:, None, None], (1, 3, 3)).astype(np.float32)
        v = make_volume(data)
        ef = V.enface_max_projection(v)
        depth = V.subpixel_depth_map(v, ef)
        assert np.allclose(depth, true, atol=1e-3)

    def test_border_peak_keeps_integer(self):
        data = np.zeros((4, 2, 2), dtype=np.float32)
        data[0] = 1.0
        v = make_volume(data)
        depth = V.subpixel_depth_map(v, V.enface_max_projection(v))
        assert np.array_equal(depth, np.zeros((2, 2)))


class TestLift:
    def test_lateral_scaling_and_depth_interp(self):
        data = np.zeros((4, 4, 4), dtype=np.float32)
        data[1, :2] = 1.0  # x rows 0-1 peak at z=1
        data[3, 2:] = 1.0  # x rows 2-3 peak at z=3
        v = make_volume(data, spacing=(0.5, 1.0, 2.0))
        ef = V.enface_max_projection(v)
        pts = V.lift_pixels_to_3d(ef, [[1.5, 1.0]], v.spacing)
        assert np.allclose(pts[0], [1.5, 2.0, 0.5 * 2.0])  # depth mid 1..3

    def test_out_of_bounds(self):
        v = make_volume(np.zeros((3, 3, 3)))
        ef = V.enface_max_projection(v)
        with pytest.raises(OutOfBounds):
            V.lift_pixels_to_3d(ef, [[5.0, 0.0]], v.spacing)


class TestOctvIO:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(2)
        data = rng.random((5, 6, 7), dtype=np.float32)
        pose = RigidTransform(np.eye(3), np.array([1.0, 2.0, 3.0]))
        v = V.OctVolume(data, (0.1, 0.2, 0.3), pose)
        path = tmp_path / "t.octv"
        V.save_octv(path, v)
        u = V.load_octv(path)
        assert np.array_equal(u.intensities, data)
        assert u.spacing == v.spacing
        assert np.allclose(u.acquisition_pose.translation, [1, 2, 3])

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.octv"
        p.write_bytes(b"NOPE1234")
        with pytest.raises(ValueError):
            V.load_octv(p)
