"""OCT volume container, volumetric filtering, and surface extraction.

Volume layout is (Z, X, Y): axis 0 is the depth axis, axes 1 and 2 the
lateral scan axes. Voxel (z, x, y) sits at (x*dx, y*dy, z*dz) mm in the
probe frame O, with the depth axis pointing into the tissue.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import OutOfBounds, VolumeTooSmall
from .geom import RigidTransform

_MAGIC = b"OCTV"


@dataclass(frozen=True)
class OctVolume:
    """Intensity grid in [0, 1] plus voxel spacing and acquisition pose.

    ``spacing`` is (dz, dx, dy) mm/voxel; ``acquisition_pose`` is the robot
    pose H_gi (end-effector to robot world) reported at capture time.
    """

    intensities: np.ndarray  # (Z, X, Y) float32
    spacing: tuple[float, float, float]
    acquisition_pose: RigidTransform

    def __post_init__(self):
        data = np.asarray(self.intensities, dtype=np.float32)
        if data.ndim != 3:
            raise ValueError("intensities must be a 3D grid")
        if any(s <= 0 for s in self.spacing):
            raise ValueError("spacing must be strictly positive")
        data.flags.writeable = False
        object.__setattr__(self, "intensities", data)
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.intensities.shape

    @property
    def fov(self) -> tuple[float, float, float]:
        """(Z, X, Y) extent in mm."""
        return tuple(d * s for d, s in zip(self.dims, self.spacing))


@dataclass(frozen=True)
class EnfaceResult:
    """Per-lateral-cell depth maximum: image (X, Y) and argmax index grid."""

    image: np.ndarray
    depth_index: np.ndarray


@dataclass(frozen=True)
class SurfacePoints:
    """Surface samples in the probe frame O, one per valid lateral cell."""

    points_o: np.ndarray  # (N, 3) mm
    intensity: np.ndarray  # (N,)
    mask: np.ndarray  # (X, Y) bool, True where a point was emitted


def median_filter_3(v: OctVolume) -> OctVolume:
    """3x3x3 median with replicate-padded borders."""
    if any(d < 3 for d in v.dims):
        raise VolumeTooSmall(f"dims {v.dims} need >= 3 voxels per axis")
    out = ndimage.median_filter(v.intensities, size=3, mode="nearest")
    return OctVolume(out, v.spacing, v.acquisition_pose)


def enface_max_projection(v: OctVolume) -> EnfaceResult:
    """Max over the depth axis; ties break to the smallest depth index."""
    data = v.intensities
    idx = data.argmax(axis=0)
    img = np.take_along_axis(data, idx[None], axis=0)[0]
    return EnfaceResult(img, idx)


def extract_surface(v: OctVolume, min_intensity: float) -> SurfacePoints:
    """One point per lateral cell whose depth maximum reaches the threshold."""
    dz, dx, dy = v.spacing
    ef = enface_max_projection(v)
    mask = ef.image >= min_intensity
    xs, ys = np.nonzero(mask)
    zs = ef.depth_index[xs, ys]
    pts = np.column_stack([xs * dx, ys * dy, zs * dz])
    return SurfacePoints(pts, ef.image[xs, ys].astype(float), mask)


def subpixel_depth_map(v: OctVolume, e: EnfaceResult) -> np.ndarray:
    """Refine the integer argmax depth map to subpixel by log-parabola fit.

    The axial point spread is modeled as Gaussian, for which a parabola in
    log intensity through the peak sample and its depth neighbors is exact.
    Offsets are clamped to half a voxel; border and flat cells keep the
    integer index.
    """
    data = np.maximum(v.intensities, 1e-6)
    nz = data.shape[0]
    idx = e.depth_index
    zm = np.clip(idx - 1, 0, nz - 1)
    zp = np.clip(idx + 1, 0, nz - 1)
    lm = np.log(np.take_along_axis(data, zm[None], axis=0)[0])
    l0 = np.log(np.take_along_axis(data, idx[None], axis=0)[0])
    lp = np.log(np.take_along_axis(data, zp[None], axis=0)[0])
    denom = lm - 2.0 * l0 + lp
    with np.errstate(divide="ignore", invalid="ignore"):
        off = 0.5 * (lm - lp) / denom
    off = np.where(np.abs(denom) > 1e-9, off, 0.0)
    off = np.clip(off, -0.5, 0.5)
    off[(idx == 0) | (idx == nz - 1)] = 0.0
    return idx + off


def lift_pixels_to_3d(e: EnfaceResult, pixels, spacing,
                      depth_map: np.ndarray | None = None) -> np.ndarray:
    """Lift subpixel en-face points (u, v) to 3D probe-frame mm.

    Lateral coordinates scale by the lateral spacing; depth comes from
    bilinear interpolation of the argmax depth map (or of ``depth_map``,
    e.g. a subpixel-refined one, when given).
    """
    dz, dx, dy = spacing
    px = np.asarray(pixels, dtype=float).reshape(-1, 2)
    nx, ny = e.image.shape
    if np.any(px[:, 0] < 0) or np.any(px[:, 0] > nx - 1) or \
            np.any(px[:, 1] < 0) or np.any(px[:, 1] > ny - 1):
        raise OutOfBounds("pixel outside en-face image")
    depth = e.depth_index if depth_map is None else depth_map
    z = ndimage.map_coordinates(np.asarray(depth, dtype=float), px.T,
                                order=1, mode="nearest")
    return np.column_stack([px[:, 0] * dx, px[:, 1] * dy, z * dz])


# --- .octv persistence --------------------------------------------------------

def save_octv(path, v: OctVolume) -> None:
    """Write magic, little-endian header length, JSON header, raw f32 data."""
    header = {
        "dims": list(v.dims),
        "spacing": list(v.spacing),
        "acquisition_pose": v.acquisition_pose.as_flat(),
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(np.ascontiguousarray(v.intensities, dtype="<f4").tobytes())


def load_octv(path) -> OctVolume:
    with open(path, "rb") as f:
        if f.read(4) != _MAGIC:
            raise ValueError(f"{path}: not an .octv file")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen))
        dims = tuple(header["dims"])
        data = np.frombuffer(f.read(), dtype="<f4").reshape(dims)
    return OctVolume(data, tuple(header["spacing"]),
                     RigidTransform.from_flat(header["acquisition_pose"]))
