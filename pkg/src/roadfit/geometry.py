"""
Planar geometric kernel.

Road segments are straight edges between two 3D nodes; every force works on
the XY projection (z is carried along but never enters a distance). A segment
plus a width spans an oriented rectangle, the implicit road surface.

Scalar helpers take array-likes and return floats / small arrays. The
``*_v`` helpers are vectorised over leading axes and are what the matching,
force and evaluation code runs on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateSegment, InvalidPolygon

EPS_LEN = 1e-6
CONVEX_TOL = 1e-9


def as_point3(p) -> np.ndarray:
    arr = np.asarray(p, dtype=float).reshape(-1)
    if arr.size == 2:
        arr = np.array([arr[0], arr[1], 0.0])
    if arr.size != 3 or not np.all(np.isfinite(arr)):
        raise ValueError(f"not a finite 3D point: {p!r}")
    return arr


def _xy(p) -> np.ndarray:
    return as_point3(p)[:2]


def cross2(a, b):
    """z-component of the cross product of 2D vectors (broadcasts)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def left_normal(d):
    d = np.asarray(d, dtype=float)
    return np.stack([-d[..., 1], d[..., 0]], axis=-1)


# --------------------------------------------------------------------------
# polygons
# --------------------------------------------------------------------------

def shoelace_area(vertices) -> float:
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def convex_hull(points) -> np.ndarray:
    """Andrew's monotone chain; returns CCW hull without collinear points."""
    pts = sorted({(float(x), float(y)) for x, y in np.asarray(points, dtype=float)[:, :2]})
    if len(pts) <= 2:
        return np.array(pts, dtype=float).reshape(-1, 2)

    def half(seq):
        out = []
        for p in seq:
            while len(out) >= 2 and (
                (out[-1][0] - out[-2][0]) * (p[1] - out[-2][1])
                - (out[-1][1] - out[-2][1]) * (p[0] - out[-2][0])
            ) <= 0:
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(reversed(pts))
    return np.array(lower[:-1] + upper[:-1], dtype=float)


def is_convex_ccw(vertices, tol: float = CONVEX_TOL) -> bool:
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or len(v) < 3 or not np.all(np.isfinite(v)):
        return False
    e = np.roll(v, -1, axis=0) - v
    if np.any(np.hypot(e[:, 0], e[:, 1]) <= tol):
        return False
    turns = cross2(e, np.roll(e, -1, axis=0))
    if np.any(turns < -tol):
        return False
    if shoelace_area(v) <= tol:
        return False
    # a simple convex polygon turns exactly once around
    ang = np.arctan2(e[:, 1], e[:, 0])
    sweep = np.diff(np.concatenate([ang, ang[:1]]))
    sweep = (sweep + np.pi) % (2 * np.pi) - np.pi
    return abs(sweep.sum() - 2 * np.pi) < 1e-6


@dataclass(frozen=True, eq=False)
class ConvexPolygon:
    """Counter-clockwise strictly convex polygon in planar metres."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim == 2 and v.shape[1] == 3:
            v = v[:, :2]
        if len(v) > 3 and np.allclose(v[0], v[-1]):
            v = v[:-1]
        if not is_convex_ccw(v):
            raise InvalidPolygon("polygon is not convex, counter-clockwise and simple")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @classmethod
    def hull_of(cls, points) -> "ConvexPolygon":
        hull = convex_hull(points)
        if len(hull) < 3:
            raise InvalidPolygon("convex hull is degenerate")
        return cls(hull)

    @property
    def area(self) -> float:
        return shoelace_area(self.vertices)

    @property
    def centroid(self) -> np.ndarray:
        v = self.vertices
        nxt = np.roll(v, -1, axis=0)
        c = cross2(v, nxt)
        a = c.sum() / 2.0
        return np.array([((v[:, 0] + nxt[:, 0]) * c).sum(), ((v[:, 1] + nxt[:, 1]) * c).sum()]) / (6.0 * a)

    @property
    def diameter(self) -> float:
        d = self.vertices[:, None, :] - self.vertices[None, :, :]
        return float(np.sqrt((d ** 2).sum(-1)).max())

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    def translated(self, dx: float, dy: float) -> "ConvexPolygon":
        return ConvexPolygon(self.vertices + np.array([dx, dy]))

    def contains_points(self, pts) -> np.ndarray:
        p = np.asarray(pts, dtype=float)[..., :2]
        v = self.vertices
        e = np.roll(v, -1, axis=0) - v
        rel = p[..., None, :] - v
        return np.all(cross2(e, rel) >= -CONVEX_TOL, axis=-1)

    def __repr__(self):
        return f"ConvexPolygon({self.vertices.tolist()})"


# --------------------------------------------------------------------------
# segments and axes
# --------------------------------------------------------------------------

def point_to_axis_distance(ob, n_i, n_j):
    """
    Orthogonal distance from ``ob`` to the infinite axis through n_i, n_j.

    Returns ``(distance, plane_normal, lateral_unit_vector)`` where
    plane_normal = ObN_i x N_iN_j and the lateral vector is
    (N_iN_j/|N_iN_j|) x (N_p/|N_p|). Computed on the XY projection. When the
    observation lies on the axis the lateral vector is the left normal.
    """
    o, a, b = _xy(ob), _xy(n_i), _xy(n_j)
    e = b - a
    length = math.hypot(e[0], e[1])
    if length <= EPS_LEN:
        raise DegenerateSegment(f"segment length {length} <= {EPS_LEN}")
    cz = float(cross2(a - o, e))
    normal = np.array([0.0, 0.0, cz])
    u = e / length
    if cz == 0.0:
        lateral = np.array([-u[1], u[0], 0.0])
    else:
        s = math.copysign(1.0, cz)
        # (u, 0) x (0, 0, s) = (u_y s, -u_x s, 0)
        lateral = np.array([u[1] * s, -u[0] * s, 0.0])
    return abs(cz) / length, normal, lateral


def rect_from_segment(n_i, n_j, w: float) -> ConvexPolygon:
    """Implicit road surface: rectangle centred on the XY segment, half-width w/2."""
    if not w > 0:
        raise ValueError("width must be positive")
    a, b = _xy(n_i), _xy(n_j)
    e = b - a
    length = math.hypot(e[0], e[1])
    if length <= EPS_LEN:
        raise DegenerateSegment(f"segment length {length} <= {EPS_LEN}")
    off = left_normal(e / length) * (w / 2.0)
    return ConvexPolygon(np.array([a - off, b - off, b + off, a + off]))


def segment_frames_v(a, b):
    """Return (unit direction, length, left normal) for arrays of XY segments."""
    e = np.asarray(b, dtype=float)[..., :2] - np.asarray(a, dtype=float)[..., :2]
    length = np.hypot(e[..., 0], e[..., 1])
    with np.errstate(invalid="ignore", divide="ignore"):
        u = e / length[..., None]
    return u, length, left_normal(u)


def point_rect_distance_v(p, a, b, w):
    """Distance from points to finite rectangles (0 inside); broadcasts."""
    p = np.asarray(p, dtype=float)[..., :2]
    a = np.asarray(a, dtype=float)[..., :2]
    u, length, nrm = segment_frames_v(a, b)
    rel = p - a
    t = (rel * u).sum(-1)
    v = (rel * nrm).sum(-1)
    half = 0.5 * length
    dx = np.maximum(np.abs(t - half) - half, 0.0)
    dy = np.maximum(np.abs(v) - 0.5 * np.asarray(w, dtype=float), 0.0)
    return np.hypot(dx, dy)


def point_line_distance_v(p, a, b):
    """Unsigned distance from points to infinite lines through a, b."""
    p = np.asarray(p, dtype=float)[..., :2]
    a = np.asarray(a, dtype=float)[..., :2]
    e = np.asarray(b, dtype=float)[..., :2] - a
    return np.abs(cross2(a - p, e)) / np.hypot(e[..., 0], e[..., 1])


def point_segment_distance_v(p, a, b):
    p = np.asarray(p, dtype=float)[..., :2]
    a = np.asarray(a, dtype=float)[..., :2]
    e = np.asarray(b, dtype=float)[..., :2] - a
    ee = (e * e).sum(-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(ee > 0, ((p - a) * e).sum(-1) / ee, 0.0)
    t = np.clip(t, 0.0, 1.0)
    diff = p - (a + t[..., None] * e)
    return np.hypot(diff[..., 0], diff[..., 1])


def axial_azimuth(a, b):
    """Undirected direction of a->b folded into [0, pi)."""
    e = np.asarray(b, dtype=float)[..., :2] - np.asarray(a, dtype=float)[..., :2]
    az = np.mod(np.arctan2(e[..., 1], e[..., 0]), np.pi)
    return np.where(az >= np.pi, 0.0, az)


def axial_diff(a, b):
    """a - b wrapped into (-pi/2, pi/2]."""
    d = np.mod(np.asarray(a, dtype=float) - np.asarray(b, dtype=float) + np.pi / 2, np.pi) - np.pi / 2
    return np.where(d == -np.pi / 2, np.pi / 2, d)


def axial_distance(a, b):
    d = np.abs(np.mod(np.asarray(a, dtype=float) - np.asarray(b, dtype=float), np.pi))
    return np.minimum(d, np.pi - d)


# --------------------------------------------------------------------------
# clipping and distances between convex polygons
# --------------------------------------------------------------------------

def clip_convex(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of a convex polygon by a convex CCW polygon."""
    out = [tuple(p) for p in subject]
    n = len(clip)
    for k in range(n):
        if not out:
            break
        cx, cy = clip[k]
        ex, ey = clip[(k + 1) % n][0] - cx, clip[(k + 1) % n][1] - cy
        inp, out = out, []
        sx, sy = inp[-1]
        s_side = ex * (sy - cy) - ey * (sx - cx)
        for px, py in inp:
            p_side = ex * (py - cy) - ey * (px - cx)
            if p_side >= 0:
                if s_side < 0:
                    t = s_side / (s_side - p_side)
                    out.append((sx + t * (px - sx), sy + t * (py - sy)))
                out.append((px, py))
            elif s_side >= 0:
                t = s_side / (s_side - p_side)
                out.append((sx + t * (px - sx), sy + t * (py - sy)))
            sx, sy, s_side = px, py, p_side
    return np.array(out, dtype=float).reshape(-1, 2)


def convex_intersection_area(a: ConvexPolygon, b: ConvexPolygon) -> float:
    for poly in (a, b):
        if not isinstance(poly, ConvexPolygon):
            raise InvalidPolygon("expected ConvexPolygon")
    # quick reject on bounding boxes
    ax0, ay0, ax1, ay1 = a.bounds
    bx0, by0, bx1, by1 = b.bounds
    if ax1 <= bx0 or bx1 <= ax0 or ay1 <= by0 or by1 <= ay0:
        return 0.0
    clipped = clip_convex(a.vertices, b.vertices)
    if len(clipped) < 3:
        return 0.0
    return max(shoelace_area(clipped), 0.0)


def _closest_on_segment(p, a, b):
    e = b - a
    ee = float(e @ e)
    t = 0.0 if ee == 0 else min(max(float((p - a) @ e) / ee, 0.0), 1.0)
    return a + t * e


def closest_points(a: ConvexPolygon, b: ConvexPolygon):
    """Closest boundary pair ``(dist, point_on_a, point_on_b)`` for disjoint polygons."""
    best = (math.inf, None, None)
    for src, dst, flip in ((a.vertices, b.vertices, False), (b.vertices, a.vertices, True)):
        n = len(dst)
        for p in src:
            for k in range(n):
                q = _closest_on_segment(p, dst[k], dst[(k + 1) % n])
                d = math.hypot(p[0] - q[0], p[1] - q[1])
                if d < best[0]:
                    best = (d, q, p) if flip else (d, p, q)
    return best


def polygon_to_rect_distance(obj: ConvexPolygon, rect: ConvexPolygon):
    """
    ``(separation, overlap_fraction)`` between an object surface and a road rectangle.

    Disjoint: (min boundary separation, 0). Contained: (0, 1).
    Partial overlap: (0, Area(obj & rect) / Area(obj)).
    """
    inter = convex_intersection_area(obj, rect)
    if inter > 0.0:
        frac = min(inter / obj.area, 1.0)
        if frac > 1.0 - 1e-12:
            frac = 1.0
        return 0.0, frac
    return closest_points(obj, rect)[0], 0.0


def segments_properly_cross_v(p1, p2, q1, q2, tol: float = 1e-9):
    """Proper (interior) crossing test for arrays of XY segment pairs."""
    d1 = cross2(p2 - p1, q1 - p1)
    d2 = cross2(p2 - p1, q2 - p1)
    d3 = cross2(q2 - q1, p1 - q1)
    d4 = cross2(q2 - q1, p2 - q1)
    return (((d1 > tol) & (d2 < -tol)) | ((d1 < -tol) & (d2 > tol))) & (
        ((d3 > tol) & (d4 < -tol)) | ((d3 < -tol) & (d4 > tol))
    )


def segment_intersection_point(p1, p2, q1, q2) -> np.ndarray:
    r = p2 - p1
    s = q2 - q1
    t = cross2(q1 - p1, s) / cross2(r, s)
    return p1 + t * r


def polyline_length(coords: Sequence) -> float:
    c = np.asarray(coords, dtype=float)[:, :2]
    return float(np.hypot(*np.diff(c, axis=0).T).sum()) if len(c) > 1 else 0.0
