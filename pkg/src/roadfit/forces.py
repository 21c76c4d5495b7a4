"""
Residuals and jacobians of every force.

Each ``*_terms`` function is vectorised over blocks and returns the raw
(unweighted) residual together with its derivatives with respect to the XY
coordinates of the nodes involved and/or the width. The solver scales rows by
sqrt(effective weight) and applies the robust loss.

Observation forces come in a node variant and a width variant sharing the
same residual; which derivatives are used is decided when the problem is
assembled.
"""

from __future__ import annotations

import enum
import math

import numpy as np

from .errors import DegenerateSegment, InvalidEstimate
from .geometry import (
    EPS_LEN,
    axial_azimuth,
    axial_diff,
    closest_points,
    cross2,
    left_normal,
    point_to_axis_distance,
    polygon_to_rect_distance,
    rect_from_segment,
)
from .observation import Behaviour

OBJECT_FD_STEP = 1e-4
COLLINEAR_TOL = 1e-9


class Kind(str, enum.Enum):
    KERB_NODE = "KERB_NODE"
    KERB_WIDTH = "KERB_WIDTH"
    OBJECT_NODE = "OBJECT_NODE"
    OBJECT_WIDTH = "OBJECT_WIDTH"
    DIRECTION = "DIRECTION"
    POS = "POS"
    LENGTH = "LENGTH"
    WIDTH = "WIDTH"
    ANGLE = "ANGLE"


OBSERVATION_KINDS = (Kind.KERB_NODE, Kind.KERB_WIDTH, Kind.OBJECT_NODE, Kind.OBJECT_WIDTH, Kind.DIRECTION)
REGULARISATION_KINDS = (Kind.POS, Kind.LENGTH, Kind.WIDTH, Kind.ANGLE)


# --------------------------------------------------------------------------
# losses
# --------------------------------------------------------------------------

def soft_l1(s, scale: float = 1.0):
    """rho(s) = 2 (sqrt(1 + s) - 1) evaluated as a^2 rho(s / a^2); returns (rho, rho', rho'')."""
    s = np.asarray(s, dtype=float)
    a2 = scale * scale
    z = s / a2
    root = np.sqrt(1.0 + z)
    return a2 * 2.0 * (root - 1.0), 1.0 / root, -0.5 / (root ** 3) / a2


def squared_loss(s, scale: float = 1.0):
    s = np.asarray(s, dtype=float)
    return s, np.ones_like(s), np.zeros_like(s)


LOSSES = {"SQUARED": squared_loss, "SOFT_L1": soft_l1}


# --------------------------------------------------------------------------
# vectorised terms
# --------------------------------------------------------------------------

def _axis_distance_terms(ob, pi, pj):
    """Distance from ob to the infinite line pi-pj and its node derivatives."""
    e = pj - pi
    length = np.hypot(e[:, 0], e[:, 1])
    if np.any(length <= EPS_LEN):
        raise DegenerateSegment("degenerate segment in distance term")
    u = e / length[:, None]
    rel = ob - pi
    lateral = cross2(u, rel)
    t = (rel * u).sum(1) / length
    side = np.where(lateral < 0, -1.0, 1.0)
    m = left_normal(u) * side[:, None]      # unit vector from the axis towards ob
    dist = np.abs(lateral)
    return dist, -(1.0 - t)[:, None] * m, -t[:, None] * m


def kerb_terms(ob, pi, pj, w):
    """r = |N_p| / |N_iN_j| - w / 2; returns (r, dr/dpi, dr/dpj, dr/dw)."""
    ob, pi, pj = (np.asarray(x, dtype=float)[:, :2] for x in (ob, pi, pj))
    dist, dpi, dpj = _axis_distance_terms(ob, pi, pj)
    w = np.asarray(w, dtype=float)
    return dist - w / 2.0, dpi, dpj, np.full(len(dist), -0.5)


def direction_terms(target, pi, pj):
    """r = axial difference between the segment azimuth and the target; (r, dpi, dpj)."""
    pi, pj = (np.asarray(x, dtype=float)[:, :2] for x in (pi, pj))
    e = pj - pi
    l2 = (e ** 2).sum(1)
    if np.any(l2 <= EPS_LEN ** 2):
        raise DegenerateSegment("degenerate segment in direction term")
    r = axial_diff(axial_azimuth(pi, pj), target)
    g = np.column_stack([-e[:, 1], e[:, 0]]) / l2[:, None]
    return r, -g, g


def position_terms(p, p0):
    """r = |p - p0| (3D); derivative is the unit vector p0 -> p, zero at p0."""
    d = np.asarray(p, dtype=float) - np.asarray(p0, dtype=float)
    r = np.sqrt((d ** 2).sum(1))
    with np.errstate(invalid="ignore", divide="ignore"):
        g = np.where(r[:, None] > 0, d / r[:, None], 0.0)
    return r, g


def length_terms(pi, pj, initial_length):
    """r = L0 - L; (r, dpi, dpj)."""
    pi, pj = (np.asarray(x, dtype=float)[:, :2] for x in (pi, pj))
    e = pj - pi
    length = np.hypot(e[:, 0], e[:, 1])
    if np.any(length <= EPS_LEN):
        raise DegenerateSegment("degenerate segment in length term")
    u = e / length[:, None]
    return np.asarray(initial_length, dtype=float) - length, u, -u


def width_terms(w, w0):
    """r = |w0 - w| with subgradient sign(w - w0) (0 at equality)."""
    d = np.asarray(w, dtype=float) - np.asarray(w0, dtype=float)
    return np.abs(d), np.sign(d)


def angle_terms(pi, pj, pk, initial_angle):
    """
    r = angle(N_i N_j N_k) - initial angle, derivative for N_j only.

    The derivative points along the bisector B_j with the magnitude the angle
    change would have for an isosceles triangle whose legs have the mean leg
    length: d(angle)/d(shift along B_j) = 2 sin(angle / 2) / L.
    """
    pi, pj, pk = (np.asarray(x, dtype=float)[:, :2] for x in (pi, pj, pk))
    a = pi - pj
    c = pk - pj
    la = np.hypot(a[:, 0], a[:, 1])
    lc = np.hypot(c[:, 0], c[:, 1])
    if np.any(la <= EPS_LEN) or np.any(lc <= EPS_LEN):
        raise DegenerateSegment("degenerate segment in angle term")
    theta = np.abs(np.arctan2(cross2(a, c), (a * c).sum(1)))
    r = theta - np.asarray(initial_angle, dtype=float)
    b = a / (2 * la[:, None]) + c / (2 * lc[:, None])
    nb = np.hypot(b[:, 0], b[:, 1])
    # collinear: fall back to the XY normal of N_iN_k
    base = pk - pi
    fallback = left_normal(base / np.hypot(base[:, 0], base[:, 1])[:, None])
    with np.errstate(invalid="ignore", divide="ignore"):
        dirn = np.where((nb > COLLINEAR_TOL)[:, None], b / nb[:, None], fallback)
    mag = 2.0 * np.sin(theta / 2.0) / (0.5 * (la + lc))
    return r, dirn * mag[:, None]


# --------------------------------------------------------------------------
# object surfaces (per block)
# --------------------------------------------------------------------------

def object_value(polygon, cls, pi, pj, w):
    """Residual of one object observation against the surface of (pi, pj, w)."""
    b = cls.behaviour
    if b in (Behaviour.BORDER_IN, Behaviour.BORDER_OUT):
        d, _, _ = point_to_axis_distance(polygon.centroid, pi, pj)
        if b == Behaviour.BORDER_IN:
            return (w / 2.0 - d) - cls.expected_border_distance
        return (d - w / 2.0) - cls.expected_border_distance
    rect = rect_from_segment(pi, pj, w)
    sep, frac = polygon_to_rect_distance(polygon, rect)
    if b == Behaviour.IN:
        return sep if sep > 0 else (1.0 - frac) * polygon.diameter
    if b == Behaviour.OUT:
        return frac * polygon.diameter
    raise ValueError("UNDEFINED behaviour has no force")


def _fd_object(polygon, cls, pi, pj, w, h=OBJECT_FD_STEP):
    base = np.array([pi[0], pi[1], pj[0], pj[1], w], dtype=float)
    g = np.zeros(5)
    for k in range(5):
        up, dn = base.copy(), base.copy()
        up[k] += h
        dn[k] -= h
        fu = object_value(polygon, cls, up[0:2], up[2:4], max(up[4], 1e-9))
        fd = object_value(polygon, cls, dn[0:2], dn[2:4], max(dn[4], 1e-9))
        g[k] = (fu - fd) / (2 * h)
    return g[0:2], g[2:4], g[4]


def object_terms(polygon, cls, pi, pj, w):
    """
    (r, dpi, dpj, dw) for one object. Centroid (BORDER_*) and separation
    (disjoint IN) paths are analytic; the overlap fraction is differentiated by
    central differences. Node derivatives are projected onto the segment
    normal so node forces act orthogonally to the axis.
    """
    pi = np.asarray(pi, dtype=float)[:2]
    pj = np.asarray(pj, dtype=float)[:2]
    e = pj - pi
    length = math.hypot(e[0], e[1])
    if length <= EPS_LEN:
        raise DegenerateSegment("degenerate segment in object term")
    u = e / length
    nrm = np.array([-u[1], u[0]])
    b = cls.behaviour
    r = object_value(polygon, cls, pi, pj, w)
    if b in (Behaviour.BORDER_IN, Behaviour.BORDER_OUT):
        _, dpi, dpj = _axis_distance_terms(polygon.centroid[None], pi[None], pj[None])
        sgn = -1.0 if b == Behaviour.BORDER_IN else 1.0
        dpi, dpj, dw = sgn * dpi[0], sgn * dpj[0], -0.5 * sgn
    elif b == Behaviour.IN and r > 0 and polygon_to_rect_distance(polygon, rect_from_segment(pi, pj, w))[1] == 0.0:
        sep, q_obj, p_rect = closest_points(polygon, rect_from_segment(pi, pj, w))
        m = (q_obj - p_rect) / sep
        rel = p_rect - pi
        t = float(rel @ u) / length
        sigma = float(rel @ nrm) / (w / 2.0)
        # d(nrm)/d(e) = (R / L)(I - u u^T); we need its transpose applied to m
        proj = np.eye(2) - np.outer(u, u)
        rot_t = np.array([[0.0, 1.0], [-1.0, 0.0]])
        dn_t_m = proj @ (rot_t @ m) / length
        dpj = -(t * m + sigma * (w / 2.0) * dn_t_m)
        dpi = -((1.0 - t) * m - sigma * (w / 2.0) * dn_t_m)
        dw = -float(m @ nrm) * sigma / 2.0
    else:
        dpi, dpj, dw = _fd_object(polygon, cls, pi, pj, w)
    dpi = nrm * float(dpi @ nrm)
    dpj = nrm * float(dpj @ nrm)
    return float(r), dpi, dpj, float(dw)


# --------------------------------------------------------------------------
# scalar conveniences
# --------------------------------------------------------------------------

def _row(p):
    return np.asarray(p, dtype=float).reshape(1, -1)[:, :3] if np.asarray(p).size >= 2 else None


def _pad3(v2):
    return np.array([v2[0], v2[1], 0.0])


def kerb_residual(ob, n_i, n_j, w, variant: Kind = Kind.KERB_NODE):
    """Return (r, jacobian) where jacobian is ((3,), (3,)) for nodes or a float for width."""
    r, dpi, dpj, dw = kerb_terms(_row(ob), _row(n_i), _row(n_j), [w])
    if variant == Kind.KERB_WIDTH:
        return float(r[0]), float(dw[0])
    return float(r[0]), (_pad3(dpi[0]), _pad3(dpj[0]))


def object_residual(polygon, cls, n_i, n_j, w, variant: Kind = Kind.OBJECT_NODE):
    r, dpi, dpj, dw = object_terms(polygon, cls, n_i, n_j, w)
    if variant == Kind.OBJECT_WIDTH:
        return r, dw
    return r, (_pad3(dpi), _pad3(dpj))


def direction_residual(estimate, n_i, n_j):
    if not estimate.valid:
        raise InvalidEstimate(f"estimate for segment {estimate.segment_id} is invalid")
    r, dpi, dpj = direction_terms([estimate.target_azimuth], _row(n_i), _row(n_j))
    return float(r[0]), (_pad3(dpi[0]), _pad3(dpj[0]))


def position_residual(p, p0):
    r, g = position_terms(_row(p), _row(p0))
    return float(r[0]), g[0]


def length_residual(n_i, n_j, initial_length):
    r, dpi, dpj = length_terms(_row(n_i), _row(n_j), [initial_length])
    return float(r[0]), (_pad3(dpi[0]), _pad3(dpj[0]))


def width_residual(w, w0):
    r, g = width_terms([w], [w0])
    return float(r[0]), float(g[0])


def angle_residual(n_i, n_j, n_k, initial_angle):
    r, g = angle_terms(_row(n_i), _row(n_j), _row(n_k), [initial_angle])
    return float(r[0]), _pad3(g[0])
