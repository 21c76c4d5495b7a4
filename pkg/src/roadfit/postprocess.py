"""
Regrouping of optimised segments and topology checks.

Per axis: widths of observed segments are clustered with a 1-D DBSCAN and
replaced by their cluster's count-weighted median, unobserved segments borrow
the width of the nearest observed segment (in seq hops), and runs of equal
width are merged back into polylines.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import shapely

from . import wkt_io
from .geometry import segment_intersection_point, segments_properly_cross_v
from .road_model import RoadNetwork

CROSS_TOL = 1e-9


@dataclass
class RegroupedPart:
    coords: np.ndarray
    width: float
    segment_ids: list[int]


@dataclass
class RegroupedAxis:
    axis_id: int
    parts: list[RegroupedPart]


@dataclass
class TopologyError:
    seg_a: int
    seg_b: int
    point: np.ndarray
    kind: str = "CROSSING"


# --------------------------------------------------------------------------
# width clustering
# --------------------------------------------------------------------------

def dbscan_1d(values, eps: float, min_pts: int = 1) -> np.ndarray:
    """
    DBSCAN on scalars. Returns labels (-1 = noise) numbered by increasing
    value. A border point joins the cluster of its nearest core point (lower
    value on ties).
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    v = np.asarray(values, dtype=float)
    labels = np.full(len(v), -1, dtype=np.int64)
    if len(v) == 0:
        return labels
    order = np.argsort(v, kind="stable")
    sv = v[order]
    nb = np.searchsorted(sv, sv + eps, side="right") - np.searchsorted(sv, sv - eps, side="left")
    core = nb >= min_pts
    cidx = np.flatnonzero(core)
    if len(cidx) == 0:
        return labels
    cv = sv[cidx]
    run = np.concatenate([[0], np.cumsum(np.diff(cv) > eps)])
    sorted_labels = np.full(len(v), -1, dtype=np.int64)
    sorted_labels[cidx] = run
    for q in np.flatnonzero(~core):
        k = np.searchsorted(cv, sv[q])
        best = None
        for c in (k - 1, k):
            if 0 <= c < len(cv) and abs(cv[c] - sv[q]) <= eps:
                if best is None or abs(cv[c] - sv[q]) < abs(cv[best] - sv[q]):
                    best = c
        if best is not None:
            sorted_labels[q] = run[best]
    labels[order] = sorted_labels
    return labels


def weighted_median(values, weights) -> float:
    """Lower weighted median: smallest value whose cumulative weight reaches half the total."""
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    order = np.argsort(v, kind="stable")
    cum = np.cumsum(w[order])
    k = int(np.searchsorted(cum, 0.5 * cum[-1] - 1e-12 * cum[-1]))
    return float(v[order][min(k, len(v) - 1)])


def cluster_widths(widths, counts, eps: float = 0.5, min_pts: int = 1):
    """
    Cluster the widths of observed segments (count > 0).

    Returns ``(labels, cluster_widths)``: labels per input (-1 for unobserved
    or noise) and the count-weighted median width of every cluster.
    """
    widths = np.asarray(widths, dtype=float)
    counts = np.asarray(counts, dtype=float)
    labels = np.full(len(widths), -1, dtype=np.int64)
    obs = np.flatnonzero(counts > 0)
    labels[obs] = dbscan_1d(widths[obs], eps, min_pts)
    n = int(labels.max()) + 1 if len(labels) else 0
    cw = np.array([weighted_median(widths[labels == c], counts[labels == c]) for c in range(n)])
    return labels, cw


def propagate_widths(widths, counts, fallback) -> np.ndarray:
    """
    Give every unobserved segment (count 0) of one axis, ordered by seq, the
    width of the nearest observed segment in seq hops; ties go to the higher
    count, then the lower seq. Axes without observations keep ``fallback``.
    """
    widths = np.asarray(widths, dtype=float)
    counts = np.asarray(counts)
    out = widths.copy()
    obs = np.flatnonzero(counts > 0)
    if len(obs) == 0:
        return np.asarray(fallback, dtype=float).copy()
    for q in np.flatnonzero(counts <= 0):
        d = np.abs(obs - q)
        cand = obs[d == d.min()]
        best = max(cand, key=lambda s: (counts[s], -s))
        out[q] = widths[best]
    return out


def merge_consecutive(coords, widths, segment_ids=None) -> list[RegroupedPart]:
    """Merge maximal runs of equal width. ``coords`` has len(widths) + 1 vertices."""
    coords = np.asarray(coords, dtype=float)
    widths = np.asarray(widths, dtype=float)
    ids = list(range(len(widths))) if segment_ids is None else list(segment_ids)
    parts = []
    start = 0
    for k in range(1, len(widths) + 1):
        if k == len(widths) or widths[k] != widths[start]:
            parts.append(RegroupedPart(coords[start:k + 1].copy(), float(widths[start]), ids[start:k]))
            start = k
    return parts


def regroup(network: RoadNetwork, eps: float = 0.5, min_pts: int = 1):
    """Return ``(regrouped axes, network with regrouped widths)``."""
    net = network.copy()
    out = []
    for axis_id in sorted(net.axes):
        segs = np.array(net.axes[axis_id].segment_ids, dtype=np.int64)
        if len(segs) == 0:
            continue
        w = net.widths[segs]
        c = net.obs_count[segs]
        labels, cw = cluster_widths(w, c, eps, min_pts)
        w = np.where(labels >= 0, cw[np.maximum(labels, 0)] if len(cw) else w, w)
        w = propagate_widths(w, c, net.initial_widths[segs])
        net.widths[segs] = w
        out.append(RegroupedAxis(axis_id, merge_consecutive(net.axis_coords(axis_id), w, segs.tolist())))
    return out, net


def write_regrouped(path, axes: list[RegroupedAxis]):
    rows = []
    for ax in axes:
        for k, p in enumerate(ax.parts):
            rows.append((ax.axis_id, wkt_io.linestring_wkt(p.coords), repr(p.width), k,
                         " ".join(str(s) for s in p.segment_ids)))
    wkt_io.write_rows(path, ["axis_id", "wkt", "width", "part", "segments"], rows)


# --------------------------------------------------------------------------
# topology
# --------------------------------------------------------------------------

def detect_topology_errors(network: RoadNetwork, tol: float = CROSS_TOL) -> list[TopologyError]:
    """Pairs of segments sharing no node whose XY projections properly cross."""
    a, b = network.segment_endpoints()
    m = network.n_segments
    if m < 2:
        return []
    tree = shapely.STRtree(shapely.box(np.minimum(a[:, 0], b[:, 0]), np.minimum(a[:, 1], b[:, 1]),
                                       np.maximum(a[:, 0], b[:, 0]), np.maximum(a[:, 1], b[:, 1])))
    left, right = tree.query(tree.geometries, predicate="intersects")
    keep = left < right
    i, j = left[keep], right[keep]
    sn = network.seg_nodes
    share = ((sn[i, 0] == sn[j, 0]) | (sn[i, 0] == sn[j, 1]) | (sn[i, 1] == sn[j, 0]) | (sn[i, 1] == sn[j, 1]))
    i, j = i[~share], j[~share]
    hit = segments_properly_cross_v(a[i, :2], b[i, :2], a[j, :2], b[j, :2], tol)
    i, j = i[hit], j[hit]
    order = np.lexsort((j, i))
    return [TopologyError(int(p), int(q), segment_intersection_point(a[p, :2], b[p, :2], a[q, :2], b[q, :2]))
            for p, q in zip(i[order], j[order])]


def write_topology_errors(path, errors: list[TopologyError]):
    wkt_io.write_rows(path, ["seg_a", "seg_b", "wkt"],
                      ((e.seg_a, e.seg_b, wkt_io.point_wkt(e.point)) for e in errors))
