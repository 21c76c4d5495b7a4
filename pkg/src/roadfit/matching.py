"""
Observation -> segment matching (closest implicit road surface).

Candidate pairs come from an STRtree over segment surface bounding boxes
inflated by the search radius; exact distances are then computed against the
finite rectangles and the nearest one wins (lowest segment id on ties).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import shapely

from . import wkt_io
from .errors import ParseError
from .geometry import EPS_LEN, point_rect_distance_v, polygon_to_rect_distance, rect_from_segment
from .observation import Behaviour, ObservationSet
from .road_model import RoadNetwork


class Reason(enum.IntEnum):
    MATCHED = 0
    IN_INTERSECTION = 1
    TOO_FAR = 2
    UNDEFINED_CLASS = 3


class SpatialIndex:
    """Bounding-box tree over segment surfaces inflated by ``search_radius``."""

    def __init__(self, network: RoadNetwork, search_radius: float):
        if not search_radius > 0:
            raise ValueError("search_radius must be positive")
        self.search_radius = float(search_radius)
        a, b = network.segment_endpoints()
        lengths = network.segment_lengths()
        pad = network.widths / 2 + self.search_radius
        lo = np.minimum(a[:, :2], b[:, :2]) - pad[:, None]
        hi = np.maximum(a[:, :2], b[:, :2]) + pad[:, None]
        # degenerate segments have no surface and are never candidates
        self.seg_ids = np.flatnonzero(lengths > EPS_LEN)
        self._tree = shapely.STRtree(shapely.box(lo[self.seg_ids, 0], lo[self.seg_ids, 1],
                                                 hi[self.seg_ids, 0], hi[self.seg_ids, 1]))

    def query_points(self, xy) -> tuple[np.ndarray, np.ndarray]:
        """Return (point index, segment id) candidate pairs."""
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        if len(xy) == 0 or len(self.seg_ids) == 0:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        pi, ti = self._tree.query(shapely.points(xy), predicate="intersects")
        return pi.astype(np.int64), self.seg_ids[ti]

    def query_box(self, xmin, ymin, xmax, ymax) -> np.ndarray:
        if len(self.seg_ids) == 0:
            return np.zeros(0, dtype=np.int64)
        ti = self._tree.query(shapely.box(xmin, ymin, xmax, ymax), predicate="intersects")
        return np.sort(self.seg_ids[ti])


def build_index(network: RoadNetwork, search_radius: float) -> SpatialIndex:
    return SpatialIndex(network, search_radius)


@dataclass
class MatchSet:
    kerb_seg: np.ndarray
    kerb_reason: np.ndarray
    dir_seg: np.ndarray
    dir_reason: np.ndarray
    object_seg: np.ndarray
    object_reason: np.ndarray

    def copy(self) -> "MatchSet":
        return MatchSet(*(np.array(getattr(self, f)) for f in self.__dataclass_fields__))

    def segment_counts(self, n_segments: int) -> np.ndarray:
        """Matched kerb points plus matched objects per segment."""
        segs = np.concatenate([self.kerb_seg[self.kerb_seg >= 0], self.object_seg[self.object_seg >= 0]])
        return np.bincount(segs, minlength=n_segments).astype(np.int64)

    def rows(self, obs: ObservationSet):
        labels = [obs.kerb_labels, obs.dir_labels, np.array([o.label for o in obs.objects], dtype=object)]
        for lab, seg, reason in zip(labels, (self.kerb_seg, self.dir_seg, self.object_seg),
                                    (self.kerb_reason, self.dir_reason, self.object_reason)):
            for l, s, r in zip(lab, seg, reason):
                yield l, (int(s) if s >= 0 else "EXCLUDED"), Reason(r).name

    def as_dict(self, obs: ObservationSet) -> dict:
        return {l: s for l, s, _ in self.rows(obs) if s != "EXCLUDED"}

    def excluded(self, obs: ObservationSet) -> dict:
        return {l: r for l, s, r in self.rows(obs) if s == "EXCLUDED"}


def _nearest(pair_obs, pair_seg, dist, n_obs, radius):
    seg = np.full(n_obs, -1, dtype=np.int64)
    keep = np.isfinite(dist) & (dist <= radius)
    pair_obs, pair_seg, dist = pair_obs[keep], pair_seg[keep], dist[keep]
    if len(pair_obs):
        order = np.lexsort((pair_seg, dist, pair_obs))
        po = pair_obs[order]
        first = np.ones(len(po), dtype=bool)
        first[1:] = po[1:] != po[:-1]
        seg[po[first]] = pair_seg[order][first]
    reason = np.where(seg >= 0, Reason.MATCHED, Reason.TOO_FAR).astype(np.int8)
    return seg, reason


def match_points(xy, network: RoadNetwork, index: SpatialIndex):
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    po, ps = index.query_points(xy)
    a, b = network.segment_endpoints()
    d = point_rect_distance_v(xy[po], a[ps], b[ps], network.widths[ps])
    return _nearest(po, ps, d, len(xy), index.search_radius)


def match_observations(obs: ObservationSet, network: RoadNetwork, index: SpatialIndex) -> MatchSet:
    kseg, kreason = match_points(obs.kerb_xy, network, index)
    mid = (obs.dir_a + obs.dir_b) / 2 if obs.n_dir else np.zeros((0, 2))
    dseg, dreason = match_points(mid, network, index)
    oseg = np.full(len(obs.objects), -1, dtype=np.int64)
    oreason = np.full(len(obs.objects), Reason.TOO_FAR, dtype=np.int8)
    pos = network.positions
    r = index.search_radius
    for k, ob in enumerate(obs.objects):
        if ob.cls.behaviour == Behaviour.UNDEFINED:
            oreason[k] = Reason.UNDEFINED_CLASS
            continue
        x0, y0, x1, y1 = ob.polygon.bounds
        best = (np.inf, -1)
        for s in index.query_box(x0, y0, x1, y1):
            i, j = network.seg_nodes[s]
            rect = rect_from_segment(pos[i], pos[j], network.widths[s])
            d = polygon_to_rect_distance(ob.polygon, rect)[0]
            if d <= r and d < best[0]:
                best = (d, s)
        if best[1] >= 0:
            oseg[k] = best[1]
            oreason[k] = Reason.MATCHED
    return MatchSet(kseg, kreason, dseg, dreason, oseg, oreason)


def intersection_disks(network: RoadNetwork, radius_factor: float):
    """Centres (K, 2) and radii (K,) of intersection proxies."""
    nodes = np.flatnonzero(network.intersection_mask())
    half = np.zeros(network.n_nodes)
    np.maximum.at(half, network.seg_nodes[:, 0], network.widths / 2)
    np.maximum.at(half, network.seg_nodes[:, 1], network.widths / 2)
    return network.positions[nodes, :2], radius_factor * half[nodes]


def points_in_disks(xy, centres, radii) -> np.ndarray:
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    inside = np.zeros(len(xy), dtype=bool)
    if len(xy) == 0 or len(centres) == 0:
        return inside
    tree = shapely.STRtree(shapely.box(centres[:, 0] - radii, centres[:, 1] - radii,
                                       centres[:, 0] + radii, centres[:, 1] + radii))
    pi, di = tree.query(shapely.points(xy), predicate="intersects")
    d = np.hypot(xy[pi, 0] - centres[di, 0], xy[pi, 1] - centres[di, 1])
    inside[pi[d < radii[di]]] = True
    return inside


def exclude_intersection_kerbs(matchset: MatchSet, obs: ObservationSet, network: RoadNetwork,
                               radius_factor: float = 1.2) -> MatchSet:
    """Move kerb points / kerb direction pieces lying in an intersection disk to IN_INTERSECTION."""
    out = matchset.copy()
    centres, radii = intersection_disks(network, radius_factor)
    hit = points_in_disks(obs.kerb_xy, centres, radii) & (out.kerb_seg >= 0)
    out.kerb_seg[hit] = -1
    out.kerb_reason[hit] = Reason.IN_INTERSECTION
    if obs.n_dir:
        hit = points_in_disks((obs.dir_a + obs.dir_b) / 2, centres, radii) & (out.dir_seg >= 0)
        out.dir_seg[hit] = -1
        out.dir_reason[hit] = Reason.IN_INTERSECTION
    return out


def match_and_exclude(obs: ObservationSet, network: RoadNetwork, search_radius: float,
                      radius_factor: float) -> MatchSet:
    index = build_index(network, search_radius)
    ms = match_observations(obs, network, index)
    return exclude_intersection_kerbs(ms, obs, network, radius_factor)


# -- file I/O ---------------------------------------------------------------

def write_matches(path, matchset: MatchSet, obs: ObservationSet):
    wkt_io.write_rows(path, ["obs_id", "seg_id", "reason"], matchset.rows(obs))


def read_matches(path, obs: ObservationSet, n_segments: int) -> MatchSet:
    labels = {}
    for k, l in enumerate(obs.kerb_labels):
        labels[str(l)] = ("kerb", k)
    for k, l in enumerate(obs.dir_labels):
        labels[str(l)] = ("dir", k)
    for k, o in enumerate(obs.objects):
        labels[str(o.label)] = ("object", k)
    ms = MatchSet(np.full(obs.n_kerb, -1, dtype=np.int64), np.full(obs.n_kerb, Reason.TOO_FAR, dtype=np.int8),
                  np.full(obs.n_dir, -1, dtype=np.int64), np.full(obs.n_dir, Reason.TOO_FAR, dtype=np.int8),
                  np.full(len(obs.objects), -1, dtype=np.int64),
                  np.full(len(obs.objects), Reason.TOO_FAR, dtype=np.int8))
    with open(path, encoding="utf-8") as fh:
        for row, line in enumerate(fh, start=1):
            f = line.rstrip("\n").split(";")
            if row == 1 and f[0] == "obs_id" or not line.strip():
                continue
            if len(f) < 3 or f[0] not in labels:
                raise ParseError(f"unknown observation {f[0]!r}", row)
            kind, k = labels[f[0]]
            try:
                seg = -1 if f[1] == "EXCLUDED" else int(f[1])
                reason = Reason[f[2]]
            except (ValueError, KeyError) as exc:
                raise ParseError(str(exc), row) from None
            if seg >= n_segments:
                raise ParseError(f"segment id {seg} out of range", row)
            getattr(ms, f"{kind}_seg")[k] = seg
            getattr(ms, f"{kind}_reason")[k] = reason
    return ms
