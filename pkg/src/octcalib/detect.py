"""Marker and checker detection in 2D intensity images.

Images everywhere in this package are arrays indexed [a0, a1] and a 2D
point (u, v) addresses (axis 0, axis 1); for en-face images that is the
(x, y) lateral cell grid. All subpixel sampling is bilinear.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, QhullError

from . import board as board_mod
from .errors import BoardNotFound, RejectBorder, RejectNoMatch
from .solve import apply_homography, fit_homography


@dataclass(frozen=True)
class Detection:
    """Decoded marker: id, canonically ordered subpixel corners, confidence."""

    marker_id: int
    corners_px: np.ndarray  # (4, 2), order matches board.marker_corners_cw
    decode_confidence: float


def binarize(img: np.ndarray, offset: float = 0.02, invert: bool = False,
             window: int | None = None) -> np.ndarray:
    """Adaptive mean threshold; True = bright (foreground).

    Window defaults to 1/8 of the smaller image dimension (odd). A
    constant image classifies entirely as background; ``invert`` flips
    image contrast first so inverted inputs yield the same mask.
    """
    img = np.asarray(img, dtype=float)
    if img.size == 0:
        raise ValueError("empty image")
    if invert:
        img = img.max() + img.min() - img
    if window is None:
        window = max(3, min(img.shape) // 8)
    if window % 2 == 0:
        window += 1
    local_mean = ndimage.uniform_filter(img, size=window, mode="nearest")
    return img > local_mean + offset


def _max_area_quad(hull_pts: np.ndarray) -> tuple[np.ndarray, float]:
    """Largest-area quadrilateral with vertices on the (ordered) hull."""
    n = len(hull_pts)
    best_area = -1.0
    best = None
    for idx in combinations(range(n), 4):
        q = hull_pts[list(idx)]
        # shoelace; hull order keeps the quad simple
        area = 0.5 * abs(np.dot(q[:, 0], np.roll(q[:, 1], -1))
                         - np.dot(q[:, 1], np.roll(q[:, 0], -1)))
        if area > best_area:
            best_area = area
            best = q
    return best, best_area


def _simplify_hull(pts: np.ndarray, max_vertices: int = 24) -> np.ndarray:
    """Drop hull vertices with the smallest deviation until small enough."""
    pts = pts.copy()
    while len(pts) > max_vertices:
        prev = np.roll(pts, 1, axis=0)
        nxt = np.roll(pts, -1, axis=0)
        seg = nxt - prev
        seg_len = np.linalg.norm(seg, axis=1) + 1e-12
        dev = np.abs(np.cross(seg, pts - prev)) / seg_len
        pts = np.delete(pts, int(np.argmin(dev)), axis=0)
    return pts


def find_quads(binary: np.ndarray, min_area: float = 25.0,
               max_area: float | None = None) -> list[np.ndarray]:
    """Candidate quads from connected dark regions.

    Returns (4, 2) vertex arrays in hull (counter-clockwise) order. Dark
    components are 4-connected so checker squares touching at corners stay
    separate.
    """
    if max_area is None:
        max_area = 0.4 * binary.size
    dark = ~np.asarray(binary, dtype=bool)
    labels, n = ndimage.label(dark)  # default structure: 4-connectivity
    quads = []
    for sl, lbl in zip(ndimage.find_objects(labels), range(1, n + 1)):
        region = labels[sl] == lbl
        count = int(region.sum())
        if count < min_area or count > max_area:
            continue
        coords = np.argwhere(region).astype(float)
        coords += [sl[0].start, sl[1].start]
        try:
            hull = ConvexHull(coords)
        except QhullError:
            continue
        hull_pts = _simplify_hull(coords[hull.vertices])
        if len(hull_pts) < 4:
            continue
        quad, area = _max_area_quad(hull_pts)
        if area < min_area or area > max_area:
            continue
        # quad-like components fill most of their best quad
        if not (0.3 * area <= count <= 1.3 * area + 8):
            continue
        quads.append(quad)
    return quads


def _sample_bilinear(img: np.ndarray, pts: np.ndarray) -> np.ndarray:
    return ndimage.map_coordinates(np.asarray(img, dtype=float), pts.T,
                                   order=1, mode="nearest")


_CANONICAL_CORNERS = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])

# corner assignments tried by the decoder: 4 cyclic rotations of the quad
# plus 4 of the reversed (mirrored) order
_ASSIGNMENTS = [[(k + r) % 4 for k in range(4)] for r in range(4)] + \
               [[(r - k) % 4 for k in range(4)] for r in range(4)]


def _sample_cells(img: np.ndarray, quad: np.ndarray, sub: int = 3) -> np.ndarray:
    """Mean intensity of the 6x6 marker cell grid under one corner order."""
    h = fit_homography(_CANONICAL_CORNERS, quad)
    off = (np.arange(sub) + 0.5) / sub * 0.6 + 0.2  # central 60% of each cell
    cells = np.empty((6, 6))
    gu = (np.arange(6)[:, None] + off[None, :]).reshape(-1) / 6.0
    uu, vv = np.meshgrid(gu, gu, indexing="ij")
    pts = apply_homography(h, np.column_stack([uu.ravel(), vv.ravel()]))
    vals = _sample_bilinear(img, pts).reshape(6, sub, 6, sub)
    cells = vals.mean(axis=(1, 3)).T  # cells[gy, gx] with u along gx
    return cells


def decode_marker(img: np.ndarray, quad: np.ndarray,
                  dictionary: dict[int, np.ndarray]) -> Detection:
    """Rectify, sample 6x6 cells, verify the black border, and match the
    4x4 payload exactly (Hamming tolerance 0) under all 8 corner orders.

    Raises RejectBorder if no orientation has an all-black border,
    RejectNoMatch if the payload matches no dictionary code.
    """
    quad = np.asarray(quad, dtype=float).reshape(4, 2)
    codes = {bytes(np.packbits(bits)): mid for mid, bits in dictionary.items()}
    border_ok = False
    for assign in _ASSIGNMENTS:
        cells = _sample_cells(img, quad[assign])
        lo, hi = cells.min(), cells.max()
        if hi - lo < 0.15:
            continue  # flat patch: no marker structure
        norm = (cells - lo) / (hi - lo)
        border = np.concatenate([norm[0], norm[5], norm[1:5, 0], norm[1:5, 5]])
        if np.any(border >= 0.5):
            continue
        border_ok = True
        payload = norm[1:5, 1:5] > 0.5
        mid = codes.get(bytes(np.packbits(payload)))
        if mid is None:
            continue
        confidence = float(np.mean(np.abs(norm - 0.5) > 0.15))
        return Detection(mid, quad[assign], confidence)
    if border_ok:
        raise RejectNoMatch("payload matches no dictionary code")
    raise RejectBorder("no orientation with an all-black border")


def refine_corners_subpixel(img: np.ndarray, corners_px, window: int = 5,
                            max_iterations: int = 50
                            ) -> tuple[np.ndarray, np.ndarray]:
    """Move corners to the local gradient-orthogonality point.

    Classic saddle/edge-intersection refinement: solve
    sum w g g^T (q - p) = 0 over a (2*window+1)^2 neighborhood and iterate.
    Returns (refined corners, converged mask); a corner that does not
    converge, leaves the window, or sits in a flat/edge-deficient
    neighborhood is returned unchanged and flagged False.
    """
    img = np.asarray(img, dtype=float)
    gu, gv = np.gradient(img)
    corners = np.asarray(corners_px, dtype=float).reshape(-1, 2)
    refined = corners.copy()
    ok = np.zeros(len(corners), dtype=bool)
    d = np.arange(-window, window + 1, dtype=float)
    du, dv = np.meshgrid(d, d, indexing="ij")
    offsets = np.column_stack([du.ravel(), dv.ravel()])
    weights = np.exp(-(du.ravel() ** 2 + dv.ravel() ** 2) / (2.0 * (window / 2.0) ** 2))
    for ci, p0 in enumerate(corners):
        p = p0.copy()
        converged = False
        for _ in range(max_iterations):
            pts = p + offsets
            ga = _sample_bilinear(gu, pts)
            gb = _sample_bilinear(gv, pts)
            gxx = np.sum(weights * ga * ga)
            gyy = np.sum(weights * gb * gb)
            gxy = np.sum(weights * ga * gb)
            a = np.array([[gxx, gxy], [gxy, gyy]])
            det = gxx * gyy - gxy * gxy
            if det < 1e-12 * max(1.0, (gxx + gyy) ** 2):
                break  # flat or single-edge window
            b = np.array([np.sum(weights * (ga * ga * pts[:, 0] + ga * gb * pts[:, 1])),
                          np.sum(weights * (ga * gb * pts[:, 0] + gb * gb * pts[:, 1]))])
            p_new = np.linalg.solve(a, b)
            move = np.linalg.norm(p_new - p)
            p = p_new
            if np.linalg.norm(p - p0) > window:
                break
            if move < 1e-4:
                converged = True
                break
        if converged:
            refined[ci] = p
            ok[ci] = True
    return refined, ok


def _edge_crossing(img: np.ndarray, point: np.ndarray, normal: np.ndarray,
                   halfwidth: float, step: float = 0.5) -> float | None:
    """Gradient-centroid position of the edge crossing along the normal."""
    s = np.arange(-halfwidth, halfwidth + 1e-9, step)
    pts = point[None, :] + s[:, None] * normal[None, :]
    prof = _sample_bilinear(img, pts)
    g = np.abs(np.diff(prof))
    if g.sum() < 1e-6:
        return None
    centers = (s[:-1] + s[1:]) / 2.0
    return float(np.sum(g * centers) / np.sum(g))


def _fit_line_tls(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Total-least-squares line: (point on line, unit direction)."""
    mu = pts.mean(axis=0)
    _, _, vt = np.linalg.svd(pts - mu)
    return mu, vt[0]


def _intersect_lines(p1, d1, p2, d2) -> np.ndarray:
    a = np.column_stack([d1, -d2])
    t = np.linalg.solve(a, p2 - p1)
    return p1 + t[0] * d1


def refine_quad_edges(img: np.ndarray, quad: np.ndarray, samples: int = 24,
                      halfwidth: float = 2.5) -> np.ndarray:
    """Refine quad corners by intersecting line fits to the four edges.

    Each edge is sampled away from the corners, the subpixel crossing is
    located along the edge normal per sample, and a total-least-squares
    line is fit; adjacent lines intersect at the refined corner. Averaging
    along each edge suppresses pixel-phase and intensity-ripple bias that
    point-wise corner refinement is sensitive to. Returns the input quad
    unchanged if any edge fit fails.
    """
    quad = np.asarray(quad, dtype=float).reshape(4, 2)
    lines = []
    for k in range(4):
        a, b = quad[k], quad[(k + 1) % 4]
        direction = b - a
        length = np.linalg.norm(direction)
        if length < 4 * halfwidth:
            return quad
        direction = direction / length
        normal = np.array([-direction[1], direction[0]])
        ts = np.linspace(0.18, 0.82, samples)
        pts = []
        for t in ts:
            base = a + t * (b - a)
            off = _edge_crossing(img, base, normal, halfwidth)
            if off is not None and abs(off) < halfwidth:
                pts.append(base + off * normal)
        if len(pts) < samples // 2:
            return quad
        lines.append(_fit_line_tls(np.asarray(pts)))
    corners = np.empty((4, 2))
    for k in range(4):
        (p1, d1), (p2, d2) = lines[(k - 1) % 4], lines[k]
        try:
            corners[k] = _intersect_lines(p1, d1, p2, d2)
        except np.linalg.LinAlgError:
            return quad
    if np.max(np.linalg.norm(corners - quad, axis=1)) > 3.0:
        return quad
    return corners


def detect_markers(img: np.ndarray, dictionary: dict[int, np.ndarray],
                   min_area: float = 25.0, refine: str = "lines",
                   refine_window: int = 5, binarize_offset: float = 0.02,
                   refine_img: np.ndarray | None = None) -> list[Detection]:
    """Full marker pipeline: binarize, find quads, decode, refine corners.

    ``refine`` selects edge-line intersection (default), gradient
    orthogonality ("saddle") or no refinement ("none"); ``refine_img``
    optionally refines on a different image than the one decoded (e.g.
    the unfiltered en-face).
    """
    quads = find_quads(binarize(img, offset=binarize_offset), min_area=min_area)
    rimg = img if refine_img is None else refine_img
    detections = []
    seen = set()
    for quad in quads:
        try:
            det = decode_marker(img, quad, dictionary)
        except (RejectBorder, RejectNoMatch):
            continue
        if det.marker_id in seen:
            continue
        seen.add(det.marker_id)
        if refine == "lines":
            corners = refine_quad_edges(rimg, det.corners_px)
        elif refine == "saddle":
            refined, ok = refine_corners_subpixel(rimg, det.corners_px,
                                                  window=refine_window)
            corners = np.where(ok[:, None], refined, det.corners_px)
        else:
            corners = det.corners_px
        detections.append(Detection(det.marker_id, corners,
                                    det.decode_confidence))
    return detections


def detect_checker_corners(img: np.ndarray, spec: "board_mod.BoardSpec",
                           refine_window: int = 4,
                           min_fraction: float = 0.8
                           ) -> list[tuple[int, np.ndarray]]:
    """Interior checker corners of a fully visible board.

    Decoded markers anchor a board-to-image homography; the known 9x6
    corner lattice is predicted, snapped by subpixel refinement, and the
    homography re-fit once on the refined corners. Returns (row-major
    grid index, subpixel point) pairs; raises BoardNotFound below the
    ``min_fraction`` recovery threshold.
    """
    detections = detect_markers(img, spec.dictionary)
    if not detections:
        raise BoardNotFound("no marker decoded")
    src = np.vstack([board_mod.marker_corners_cw(spec, d.marker_id)[:, :2]
                     for d in detections])
    dst = np.vstack([d.corners_px for d in detections])
    h = fit_homography(src, dst)
    lattice = board_mod.checker_corners_cw(spec)[:, :2]

    found: list[tuple[int, np.ndarray]] = []
    for _ in range(2):
        pred = apply_homography(h, lattice)
        inside = ((pred[:, 0] >= refine_window)
                  & (pred[:, 0] <= img.shape[0] - 1 - refine_window)
                  & (pred[:, 1] >= refine_window)
                  & (pred[:, 1] <= img.shape[1] - 1 - refine_window))
        refined, ok = refine_corners_subpixel(img, pred, window=refine_window)
        keep = inside & ok & (np.linalg.norm(refined - pred, axis=1) < 3.0)
        found = [(i, refined[i]) for i in np.flatnonzero(keep)]
        if len(found) >= 4:
            h = fit_homography(lattice[[i for i, _ in found]],
                               np.array([p for _, p in found]))
    if len(found) < min_fraction * len(lattice):
        raise BoardNotFound(f"only {len(found)}/{len(lattice)} corners recovered")
    return found
