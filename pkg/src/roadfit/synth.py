"""
Synthetic scenarios: a true network, a perturbed initial network, ground-truth
kerb polylines and sensed observations, all driven by one seeded generator.

Width error is modelled as a systematic underestimate: every border of the
initial network sits ``width_error`` metres inside the true border (plus
optional per-axis noise), so the initial surfaces never cover the true kerbs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSpec
from .geometry import ConvexPolygon, left_normal
from .observation import Observation, Source
from .road_model import RoadNetwork, split_polylines

OBJECT_CLASSES = ("pedestrian_crossing", "car", "traffic_sign", "barrier", "other")


@dataclass
class ScenarioSpec:
    kind: str = "grid"                   # grid | radial | single
    grid_size: int = 5                   # intersections per side (grid)
    block_length: float = 50.0           # grid block edge / radial spoke / single axis length
    n_spokes: int = 5                    # radial
    max_segment_length: float = 10.0
    widths: tuple = (6.0, 12.0)          # true widths drawn uniformly per axis from this range
    node_jitter: float = 0.0             # sigma of XY Gaussian node noise (m)
    width_error: float = 0.0             # inward shift of each initial border (m)
    width_noise: float = 0.0             # sigma of per-axis initial width noise (m)
    kerb_step: float = 1.0
    kerb_jitter: float = 0.0             # sigma of lateral kerb noise (m)
    coverage: tuple = (1.0, 0.0, 0.0)    # probabilities of both / one / no side observed per block
    outlier_rate: float = 0.0            # outlier points as a fraction of kerb vertices
    outlier_offset: float = 5.0
    objects: tuple = ()                  # class names, one object each per block with object_rate
    object_rate: float = 0.5
    seed: int = 0

    def validate(self):
        if self.kind not in ("grid", "radial", "single"):
            raise InvalidSpec(f"unknown network kind {self.kind!r}")
        for name in ("node_jitter", "width_error", "width_noise", "kerb_jitter", "outlier_offset"):
            if getattr(self, name) < 0:
                raise InvalidSpec(f"{name} must be >= 0")
        for name in ("block_length", "max_segment_length", "kerb_step"):
            if not getattr(self, name) > 0:
                raise InvalidSpec(f"{name} must be > 0")
        for name in ("outlier_rate", "object_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidSpec(f"{name} must be in [0, 1]")
        cov = np.asarray(self.coverage, dtype=float)
        if cov.shape != (3,) or np.any(cov < 0) or abs(cov.sum() - 1.0) > 1e-9:
            raise InvalidSpec("coverage must be three probabilities summing to 1")
        lo, hi = self.widths
        if not 0 < lo <= hi:
            raise InvalidSpec("widths must satisfy 0 < min <= max")
        if self.kind == "grid" and self.grid_size < 2:
            raise InvalidSpec("grid_size must be >= 2")
        if self.kind == "radial" and self.n_spokes < 2:
            raise InvalidSpec("n_spokes must be >= 2")
        bad = set(self.objects) - set(OBJECT_CLASSES)
        if bad:
            raise InvalidSpec(f"unknown object classes {sorted(bad)}")
        return self


@dataclass
class Scenario:
    spec: ScenarioSpec
    true_network: RoadNetwork
    initial_network: RoadNetwork
    ground_truth: list                   # kerb polylines (n, 3)
    observations: list = field(default_factory=list)


def _axes(spec: ScenarioSpec):
    """True axes as (axis_id, coords) pairs; every coords vertex is a crossing or an axis end."""
    L = spec.block_length
    if spec.kind == "single":
        return [(0, np.array([[0.0, 0.0, 0.0], [L, 0.0, 0.0]]))]
    if spec.kind == "radial":
        out = []
        for k in range(spec.n_spokes):
            a = 2 * math.pi * k / spec.n_spokes
            out.append((k, np.array([[0.0, 0.0, 0.0], [L * math.cos(a), L * math.sin(a), 0.0]])))
        return out
    g = spec.grid_size
    ticks = np.arange(g) * L
    out = []
    for r in range(g):
        out.append((r, np.column_stack([ticks, np.full(g, ticks[r]), np.zeros(g)])))
    for c in range(g):
        out.append((g + c, np.column_stack([np.full(g, ticks[c]), ticks, np.zeros(g)])))
    return out


def _trim(spec, aid, vertex, half):
    """Distance cut from a kerb run at an axis vertex so it stops at the crossing road."""
    g = spec.grid_size
    if spec.kind == "grid":
        crossing = g + vertex if aid < g else vertex
        return half[crossing]
    if spec.kind == "radial" and vertex == 0:
        return max(half.values()) / math.sin(math.pi / spec.n_spokes)
    return 0.0


def _kerb_runs(spec, axes, widths):
    """Border lines of every block edge as (axis_id, block, side, start XY, end XY)."""
    half = {aid: w / 2 for aid, w in widths.items()}
    runs = []
    for aid, c in axes:
        for k, (p, q) in enumerate(zip(c[:-1, :2], c[1:, :2])):
            e = q - p
            length = float(np.hypot(*e))
            u = e / length
            n = left_normal(u)
            t0, t1 = _trim(spec, aid, k, half), _trim(spec, aid, k + 1, half)
            if length - t0 - t1 <= spec.kerb_step:
                continue
            for side in (1.0, -1.0):
                off = n * side * half[aid]
                runs.append((aid, k, side, p + u * t0 + off, q - u * t1 + off))
    return runs


def _rect(centre, u, length, width):
    n = left_normal(u)
    hl, hw = u * length / 2, n * width / 2
    return ConvexPolygon(np.array([centre - hl - hw, centre + hl - hw, centre + hl + hw, centre - hl + hw]))


def generate(spec: ScenarioSpec) -> Scenario:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    axes = _axes(spec)
    lo, hi = spec.widths
    widths = {aid: float(rng.uniform(lo, hi)) for aid, _ in axes}
    true_net = split_polylines(RoadNetwork.from_polylines([(aid, c, widths[aid]) for aid, c in axes]),
                               spec.max_segment_length)

    init = true_net.copy()
    jitter = rng.normal(0.0, 1.0, size=(init.n_nodes, 2)) * spec.node_jitter
    init.positions[:, :2] += jitter
    axis_w = {aid: max(1.0, widths[aid] - 2 * spec.width_error + spec.width_noise * float(rng.normal()))
              for aid, _ in axes}
    init.widths = np.array([axis_w[a] for a in init.seg_axis], dtype=float)
    for aid in init.axes:
        init.axes[aid].width = axis_w[aid]
    init.initial_positions = init.positions.copy()
    init.initial_widths = init.widths.copy()
    init._record_shape()

    runs = _kerb_runs(spec, axes, widths)
    ground_truth = [np.array([[a[0], a[1], 0.0], [b[0], b[1], 0.0]]) for *_, a, b in runs]

    # coverage is decided per block edge: both sides, one random side, or none
    p_both, p_one, _ = spec.coverage
    blocks: dict = {}
    for k, (aid, blk, *_rest) in enumerate(runs):
        blocks.setdefault((aid, blk), []).append(k)
    keep = set()
    for key in sorted(blocks):
        ks = blocks[key]
        draw = rng.uniform()
        if draw < p_both:
            keep.update(ks)
        elif draw < p_both + p_one:
            keep.add(ks[int(rng.integers(len(ks)))])

    obs: list[Observation] = []
    vertices = []
    for k, (aid, _, side, a, b) in enumerate(runs):
        if k not in keep:
            continue
        e = b - a
        length = float(np.hypot(*e))
        u = e / length
        n = left_normal(u)
        m = max(1, int(math.floor(length / spec.kerb_step + 1e-9)))
        s = np.linspace(0.0, length, m + 1)
        pts = a[None] + s[:, None] * u[None]
        pts = pts + n[None] * (rng.normal(0.0, 1.0, size=len(s)) * spec.kerb_jitter)[:, None]
        vertices.append((pts, n * side))
        obs.append(Observation(f"k{k}", np.column_stack([pts, np.zeros(len(pts))]), "kerb",
                               precision=0.4, source=Source.SENSED))

    if spec.outlier_rate > 0 and vertices:
        allpts = np.vstack([p for p, _ in vertices])
        outward = np.vstack([np.broadcast_to(o, p.shape) for p, o in vertices])
        count = int(round(spec.outlier_rate * len(allpts)))
        pick = rng.choice(len(allpts), size=count, replace=False)
        sides = rng.choice([-1.0, 1.0], size=count)
        for q, (i, sd) in enumerate(zip(pick, sides)):
            p = allpts[i] + outward[i] * sd * spec.outlier_offset
            # weight of one interior line vertex at the default densification length (2 m)
            obs.append(Observation(f"o{q}", np.array([p[0], p[1], 0.0]), "kerb",
                                   weight=spec.kerb_step / 2.0, source=Source.SENSED))

    if spec.objects:
        obs.extend(_objects(spec, rng, axes, widths))
    return Scenario(spec, true_net, init, ground_truth, obs)


def _objects(spec, rng, axes, widths):
    out = []
    q = 0
    for aid, c in axes:
        w = widths[aid]
        for p, r in zip(c[:-1, :2], c[1:, :2]):
            if rng.uniform() >= spec.object_rate:
                continue
            u = (r - p) / np.hypot(*(r - p))
            n = left_normal(u)
            mid = (p + r) / 2
            for name in spec.objects:
                if name == "pedestrian_crossing":
                    poly = _rect(mid, u, 4.0, 0.8 * w)
                elif name == "car":
                    poly = _rect(mid + u * 6 + n * (w / 2 - 1.2), u, 4.2, 1.8)
                elif name == "traffic_sign":
                    poly = _rect(mid - u * 6 + n * (w / 2 + 1.0), u, 0.3, 0.3)
                elif name == "barrier":
                    poly = _rect(mid + u * 10 - n * (w / 2 + 0.2), u, 3.0, 0.1)
                else:
                    poly = _rect(mid - u * 10, u, 1.0, 1.0)
                out.append(Observation(f"x{q}", poly, name, precision=0.2))
                q += 1
    return out
