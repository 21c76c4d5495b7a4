"""
Road-axis network: nodes, segments with widths, and filiation to parent axes.

Nodes and segments are identified by their row index in the arrays below, so
iteration order (and therefore every downstream result) is deterministic.
Each segment is stored oriented along its parent polyline: for consecutive
segments s1, s2 of one axis, ``seg_nodes[s1, 1] == seg_nodes[s2, 0]``.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import DegenerateSegment, InvalidNetwork
from .geometry import EPS_LEN, axial_azimuth


@dataclass
class Axis:
    axis_id: int
    segment_ids: list[int]
    width: float
    attrs: dict = field(default_factory=dict)


@dataclass
class RoadNetwork:
    positions: np.ndarray            # (N, 3)
    initial_positions: np.ndarray    # (N, 3)
    seg_nodes: np.ndarray            # (M, 2) int
    widths: np.ndarray               # (M,)
    initial_widths: np.ndarray       # (M,)
    seg_axis: np.ndarray             # (M,) int, parent axis id
    seg_seq: np.ndarray              # (M,) int, position along parent
    axes: dict[int, Axis]
    obs_count: np.ndarray = None     # (M,) int
    initial_lengths: np.ndarray = None
    angle_triplets: np.ndarray = None    # (T, 3) node ids i, j, k
    initial_angles: np.ndarray = None    # (T,)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        self.seg_nodes = np.asarray(self.seg_nodes, dtype=np.int64).reshape(-1, 2)
        self.widths = np.asarray(self.widths, dtype=float)
        self.seg_axis = np.asarray(self.seg_axis, dtype=np.int64)
        self.seg_seq = np.asarray(self.seg_seq, dtype=np.int64)
        if self.initial_positions is None:
            self.initial_positions = self.positions.copy()
        if self.initial_widths is None:
            self.initial_widths = self.widths.copy()
        if self.obs_count is None:
            self.obs_count = np.zeros(len(self.widths), dtype=np.int64)
        if self.initial_lengths is None:
            self._record_shape()

    # -- construction ------------------------------------------------------

    @classmethod
    def from_polylines(cls, polylines: Iterable, snap: float = 1e-6) -> "RoadNetwork":
        """
        Build from ``(axis_id, coords, width)`` triples.

        Polyline vertices closer than ``snap`` are merged into one node, so
        axes meeting at a shared endpoint share a node.
        """
        node_key: dict[tuple, int] = {}
        positions: list = []
        seg_nodes, widths, seg_axis, seg_seq = [], [], [], []
        axes: dict[int, Axis] = {}

        def node_for(p):
            key = (round(p[0] / snap), round(p[1] / snap), round(p[2] / snap))
            nid = node_key.get(key)
            if nid is None:
                nid = len(positions)
                node_key[key] = nid
                positions.append(p)
            return nid

        for axis_id, coords, width in polylines:
            c = np.asarray(coords, dtype=float)
            if c.shape[1] == 2:
                c = np.column_stack([c, np.zeros(len(c))])
            if axis_id in axes:
                raise ValueError(f"duplicate axis id {axis_id}")
            ids = [node_for(tuple(p)) for p in c]
            seg_ids = []
            for a, b in zip(ids[:-1], ids[1:]):
                if a == b:
                    continue
                seg_ids.append(len(seg_nodes))
                seg_nodes.append((a, b))
                widths.append(float(width))
                seg_axis.append(int(axis_id))
                seg_seq.append(len(seg_ids) - 1)
            axes[int(axis_id)] = Axis(int(axis_id), seg_ids, float(width))
        pos = np.array(positions, dtype=float).reshape(-1, 3)
        net = cls(pos, None, np.array(seg_nodes, dtype=np.int64).reshape(-1, 2),
                  np.array(widths), None, np.array(seg_axis, dtype=np.int64),
                  np.array(seg_seq, dtype=np.int64), axes)
        net.check_invariants()
        return net

    @classmethod
    def from_segments(cls, rows, snap: float = 1e-6) -> "RoadNetwork":
        """
        Build from segment rows ``(seg_id, axis_id, seq, coords, width[, initial_width, obs_count])``.

        Segments are renumbered in (axis id, seq) order; endpoints closer than
        ``snap`` share a node. Current positions are taken as initial positions.
        """
        rows = sorted(rows, key=lambda r: (r[1], r[2]))
        node_key: dict[tuple, int] = {}
        positions: list = []

        def node_for(p):
            key = (round(p[0] / snap), round(p[1] / snap), round(p[2] / snap))
            if key not in node_key:
                node_key[key] = len(positions)
                positions.append(tuple(p))
            return node_key[key]

        seg_nodes, widths, init_w, seg_axis, seg_seq, counts = [], [], [], [], [], []
        axes: dict[int, Axis] = {}
        for r in rows:
            coords = np.asarray(r[3], dtype=float)
            a, b = node_for(coords[0]), node_for(coords[-1])
            ax = axes.setdefault(int(r[1]), Axis(int(r[1]), [], float(r[4])))
            ax.segment_ids.append(len(seg_nodes))
            seg_nodes.append((a, b))
            widths.append(float(r[4]))
            init_w.append(float(r[5]) if len(r) > 5 and r[5] is not None else float(r[4]))
            counts.append(int(r[6]) if len(r) > 6 and r[6] is not None else 0)
            seg_axis.append(int(r[1]))
            seg_seq.append(len(ax.segment_ids) - 1)
        net = cls(np.array(positions, dtype=float).reshape(-1, 3), None,
                  np.array(seg_nodes, dtype=np.int64).reshape(-1, 2), np.array(widths, dtype=float),
                  np.array(init_w, dtype=float), np.array(seg_axis, dtype=np.int64),
                  np.array(seg_seq, dtype=np.int64), axes, np.array(counts, dtype=np.int64))
        net.check_invariants()
        return net

    def copy(self) -> "RoadNetwork":
        return copy.deepcopy(self)

    # -- queries -----------------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return len(self.positions)

    @property
    def n_segments(self) -> int:
        return len(self.seg_nodes)

    def segment_endpoints(self, positions=None):
        pos = self.positions if positions is None else positions
        return pos[self.seg_nodes[:, 0]], pos[self.seg_nodes[:, 1]]

    def segment_lengths(self, positions=None) -> np.ndarray:
        a, b = self.segment_endpoints(positions)
        return np.hypot(b[:, 0] - a[:, 0], b[:, 1] - a[:, 1])

    def segment_direction(self, seg_id: int) -> float:
        """Axial azimuth of a segment's XY projection, in [0, pi)."""
        a, b = self.positions[self.seg_nodes[seg_id]]
        if math.hypot(b[0] - a[0], b[1] - a[1]) <= EPS_LEN:
            raise DegenerateSegment(f"segment {seg_id} is degenerate")
        return float(axial_azimuth(a, b))

    def node_degree(self) -> np.ndarray:
        edges = np.sort(self.seg_nodes, axis=1)
        edges = np.unique(edges, axis=0) if len(edges) else edges
        return np.bincount(edges.ravel(), minlength=self.n_nodes)

    def axis_endpoint_count(self) -> np.ndarray:
        counts = np.zeros(self.n_nodes, dtype=np.int64)
        for ax in self.axes.values():
            if not ax.segment_ids:
                continue
            counts[self.seg_nodes[ax.segment_ids[0], 0]] += 1
            counts[self.seg_nodes[ax.segment_ids[-1], 1]] += 1
        return counts

    def intersection_mask(self) -> np.ndarray:
        return (self.node_degree() >= 3) | (self.axis_endpoint_count() >= 2)

    def axis_coords(self, axis_id: int, positions=None) -> np.ndarray:
        pos = self.positions if positions is None else positions
        segs = self.axes[axis_id].segment_ids
        ids = [self.seg_nodes[segs[0], 0]] + [self.seg_nodes[s, 1] for s in segs]
        return pos[ids]

    def check_invariants(self):
        def need(cond, msg):
            if not cond:
                raise InvalidNetwork(msg)

        need(np.all(self.seg_nodes[:, 0] != self.seg_nodes[:, 1]), "self-loop segment")
        need(np.all(self.seg_nodes >= 0) and np.all(self.seg_nodes < self.n_nodes), "bad node reference")
        need(np.all(self.widths > 0), "non-positive width")
        edges = np.sort(self.seg_nodes, axis=1)
        need(len(np.unique(edges, axis=0)) == len(edges), "duplicate undirected edge")
        for ax in self.axes.values():
            for s1, s2 in zip(ax.segment_ids[:-1], ax.segment_ids[1:]):
                need(self.seg_nodes[s1, 1] == self.seg_nodes[s2, 0], f"axis {ax.axis_id} is not a chain")

    # -- initial-value bookkeeping ----------------------------------------

    def _record_shape(self):
        self.initial_lengths = self.segment_lengths(self.initial_positions)
        trip = []
        for ax in self.axes.values():
            for s1, s2 in zip(ax.segment_ids[:-1], ax.segment_ids[1:]):
                trip.append((self.seg_nodes[s1, 0], self.seg_nodes[s1, 1], self.seg_nodes[s2, 1]))
        self.angle_triplets = np.array(trip, dtype=np.int64).reshape(-1, 3)
        self.initial_angles = node_angles(self.initial_positions, self.angle_triplets)


def node_angles(positions: np.ndarray, triplets: np.ndarray) -> np.ndarray:
    """Unsigned XY angle N_i N_j N_k at the middle node, in [0, pi]."""
    if len(triplets) == 0:
        return np.zeros(0)
    pi_, pj, pk = (positions[triplets[:, c], :2] for c in range(3))
    u = pi_ - pj
    v = pk - pj
    cr = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
    dt = (u * v).sum(1)
    return np.abs(np.arctan2(cr, dt))


def snapshot_initials(network: RoadNetwork) -> RoadNetwork:
    """Store current positions / widths / lengths / angles as the initial values."""
    net = network.copy()
    net.initial_positions = net.positions.copy()
    net.initial_widths = net.widths.copy()
    net._record_shape()
    return net


def split_polylines(network: RoadNetwork, max_len: float) -> RoadNetwork:
    """
    Subdivide every segment longer than ``max_len`` into ceil(L / max_len)
    equal parts. Existing vertices are kept; new nodes are appended in
    (axis id, seq) order. Widths and filiation are inherited.
    """
    if not max_len > 0:
        raise ValueError("max_len must be positive")
    positions = [p for p in network.positions]
    seg_nodes, widths, init_w, seg_axis, seg_seq, counts = [], [], [], [], [], []
    axes: dict[int, Axis] = {}
    for axis_id in sorted(network.axes):
        ax = network.axes[axis_id]
        new_ids = []
        for s in ax.segment_ids:
            a, b = network.seg_nodes[s]
            pa, pb = network.positions[a], network.positions[b]
            length = math.hypot(pb[0] - pa[0], pb[1] - pa[1])
            k = max(1, math.ceil(length / max_len - 1e-12))
            chain = [a]
            for q in range(1, k):
                positions.append(pa + (pb - pa) * (q / k))
                chain.append(len(positions) - 1)
            chain.append(b)
            for u, v in zip(chain[:-1], chain[1:]):
                new_ids.append(len(seg_nodes))
                seg_nodes.append((u, v))
                widths.append(network.widths[s])
                init_w.append(network.initial_widths[s])
                seg_axis.append(axis_id)
                seg_seq.append(len(new_ids) - 1)
                counts.append(network.obs_count[s])
        axes[axis_id] = Axis(axis_id, new_ids, ax.width, dict(ax.attrs))
    pos = np.array(positions, dtype=float).reshape(-1, 3)
    n_old = network.n_nodes
    init_pos = np.vstack([network.initial_positions, pos[n_old:]])
    net = RoadNetwork(pos, init_pos, np.array(seg_nodes, dtype=np.int64).reshape(-1, 2),
                      np.array(widths, dtype=float), np.array(init_w, dtype=float),
                      np.array(seg_axis, dtype=np.int64), np.array(seg_seq, dtype=np.int64),
                      axes, np.array(counts, dtype=np.int64))
    return net
