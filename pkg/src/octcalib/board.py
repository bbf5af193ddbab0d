"""Geometric and bit-pattern model of the ChArUco-style calibration target.

Board frame (CW): origin at the outer corner of the first white square,
x along columns, y along rows, z out of the board. Squares with even
(col + row) parity are white; a 5 mm binary marker sits at the center of
each white square. Marker ids are assigned row-major over white squares.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DictionaryGenerationFailed, UnknownMarker

WHITE_LEVEL = 0.9
BLACK_LEVEL = 0.1


def _dihedral_transforms(bits: np.ndarray) -> list[np.ndarray]:
    """All 8 rotations/reflections of a square bit matrix."""
    out = []
    for base in (bits, np.fliplr(bits)):
        for k in range(4):
            out.append(np.rot90(base, k))
    return out


def generate_dictionary(count: int = 35, min_distance: int = 4,
                        seed: int = 12345) -> dict[int, np.ndarray]:
    """Greedy search for 4x4 payload codes.

    Every pair of codes (and every code against its own non-identity
    rotations/reflections) differs by at least ``min_distance`` bits under
    all 8 dihedral transforms, so decoding is rotation- and
    mirror-unambiguous.
    """
    order = np.random.default_rng(seed).permutation(1 << 16)
    accepted: list[np.ndarray] = []
    pool = np.zeros((0, 16), dtype=np.uint8)
    for code in order:
        bits = ((int(code) >> np.arange(16)) & 1).astype(np.uint8).reshape(4, 4)
        transforms = _dihedral_transforms(bits)
        flat = bits.ravel()
        self_ok = all(
            np.sum(flat != t.ravel()) >= min_distance
            for t in transforms[1:]
        )
        if not self_ok:
            continue
        if pool.size and int(np.min(np.sum(pool != flat, axis=1))) < min_distance:
            continue
        accepted.append(bits.astype(bool))
        pool = np.vstack([pool] + [t.ravel()[None, :] for t in transforms])
        if len(accepted) == count:
            return {i: b for i, b in enumerate(accepted)}
    raise DictionaryGenerationFailed(
        f"found only {len(accepted)} of {count} codes at distance {min_distance}")


@dataclass(frozen=True)
class BoardSpec:
    """Checkerboard with embedded binary markers.

    ``dictionary`` maps marker id -> 4x4 bool payload (True = white cell).
    Each marker occupies a 6x6 cell grid (1-cell black border around the
    4x4 payload) within ``marker_edge`` mm.
    """

    cols: int = 10
    rows: int = 7
    square_edge: float = 10.0
    marker_edge: float = 5.0
    dictionary: dict[int, np.ndarray] = field(default_factory=generate_dictionary)

    def __post_init__(self):
        if not self.marker_edge < self.square_edge:
            raise ValueError("marker must fit inside a square")

    @property
    def extent(self) -> tuple[float, float]:
        return self.cols * self.square_edge, self.rows * self.square_edge

    def white_squares(self) -> list[tuple[int, int]]:
        """(col, row) of white squares, row-major (marker id order)."""
        return [(c, r) for r in range(self.rows) for c in range(self.cols)
                if (c + r) % 2 == 0]

    def marker_square(self, marker_id: int) -> tuple[int, int]:
        squares = self.white_squares()
        if not 0 <= marker_id < min(len(squares), len(self.dictionary)):
            raise UnknownMarker(f"marker id {marker_id}")
        return squares[marker_id]

    def marker_center_cw(self, marker_id: int) -> np.ndarray:
        c, r = self.marker_square(marker_id)
        s = self.square_edge
        return np.array([(c + 0.5) * s, (r + 0.5) * s, 0.0])


@dataclass(frozen=True)
class BoardFeature:
    """One identified point on the z=0 board plane."""

    kind: str  # "checker_corner" | "marker_corner"
    position_cw: np.ndarray
    marker_id: int | None = None
    corner_index: int | None = None


# canonical marker corner order: counter-clockwise about +z starting at
# the (xmin, ymin) corner; decode re-orders detections to match this.
_CORNER_SIGNS = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=float)


def marker_corners_cw(spec: BoardSpec, marker_id: int) -> np.ndarray:
    """4 ordered marker corners, (4, 3) mm, z = 0."""
    center = spec.marker_center_cw(marker_id)
    half = spec.marker_edge / 2.0
    corners = np.zeros((4, 3))
    corners[:, :2] = center[:2] + _CORNER_SIGNS * half
    return corners


def checker_corners_cw(spec: BoardSpec) -> np.ndarray:
    """Interior checker corners, ((cols-1)*(rows-1), 3) mm, row-major."""
    s = spec.square_edge
    xs = np.arange(1, spec.cols) * s
    ys = np.arange(1, spec.rows) * s
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    pts = np.zeros((gx.size, 3))
    pts[:, 0] = gx.ravel()
    pts[:, 1] = gy.ravel()
    return pts


def albedo(spec: BoardSpec, x, y,
           white: float = WHITE_LEVEL, black: float = BLACK_LEVEL) -> np.ndarray:
    """Board reflectance sampled at CW plane coordinates (mm), vectorized.

    Points outside the board are black.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    s = spec.square_edge
    out = np.full(np.broadcast(x, y).shape, black)
    wx, wy = spec.extent
    inside = (x >= 0) & (x < wx) & (y >= 0) & (y < wy)
    col = np.clip(np.floor(x / s).astype(int), 0, spec.cols - 1)
    row = np.clip(np.floor(y / s).astype(int), 0, spec.rows - 1)
    white_mask = inside & ((col + row) % 2 == 0)
    out[white_mask] = white

    # marker cells inside white squares
    lx = x - col * s  # local in-square coords, [0, s)
    ly = y - row * s
    m0 = (s - spec.marker_edge) / 2.0
    cell = spec.marker_edge / 6.0
    in_marker = (white_mask & (lx >= m0) & (lx < s - m0)
                 & (ly >= m0) & (ly < s - m0))
    if np.any(in_marker):
        gx = np.clip(((lx - m0) / cell).astype(int), 0, 5)
        gy = np.clip(((ly - m0) / cell).astype(int), 0, 5)
        border = (gx == 0) | (gx == 5) | (gy == 0) | (gy == 5)
        mid = _square_to_id(spec)[row, col]
        n_ids = max(spec.dictionary) + 1 if spec.dictionary else 0
        bits = np.zeros((n_ids + 1, 4, 4), dtype=bool)  # last row: no marker
        for i, b in spec.dictionary.items():
            bits[i] = b
        bits[-1] = True  # unmapped squares render plain white
        lookup = np.where(mid >= 0, mid, n_ids)
        payload_white = bits[lookup, np.clip(gy - 1, 0, 3), np.clip(gx - 1, 0, 3)]
        dark = in_marker & (border | ~payload_white) & (lookup < n_ids)
        out[dark] = black
    return out


def _square_to_id(spec: BoardSpec) -> np.ndarray:
    grid = np.full((spec.rows, spec.cols), -1, dtype=int)
    for i, (c, r) in enumerate(spec.white_squares()):
        if i in spec.dictionary:
            grid[r, c] = i
    return grid


def rasterize_patch(spec: BoardSpec, region_cw: tuple[float, float, float, float],
                    resolution: float, supersample: int = 1) -> np.ndarray:
    """Render (x0, y0, x1, y1) mm at ``resolution`` px/mm.

    Returns image[i, j] with axis 0 along x and axis 1 along y (the same
    layout as en-face images). Optional supersampling averages an
    ``supersample``^2 grid per pixel.
    """
    x0, y0, x1, y1 = region_cw
    nx = max(1, int(round((x1 - x0) * resolution)))
    ny = max(1, int(round((y1 - y0) * resolution)))
    ss = max(1, int(supersample))
    off = (np.arange(ss) + 0.5) / ss
    px = x0 + (np.arange(nx)[:, None] + off[None, :]).reshape(-1) / resolution
    py = y0 + (np.arange(ny)[:, None] + off[None, :]).reshape(-1) / resolution
    gx, gy = np.meshgrid(px, py, indexing="ij")
    img = albedo(spec, gx, gy)
    img = img.reshape(nx, ss, ny, ss).mean(axis=(1, 3))
    return img
