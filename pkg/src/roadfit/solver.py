"""
Problem assembly and a bounded, robustified Levenberg-Marquardt solver.

Parameter layout: node ``n`` coordinate ``c`` lives at ``3 n + c``; the width
of segment ``s`` at ``3 N + s``. Every residual row is scaled by
sqrt(effective weight); the robust loss is folded in by reweighting rows with
sqrt(rho'(s)) at the current point. The normal equations are sparse
(scipy.sparse + SuperLU) and bound constraints are handled by projection
with an active set that drops variables pinned at a bound whose gradient
points outwards.
"""

from __future__ import annotations

import datetime as _dt
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import wkt_io
from .config import Config
from .errors import DegenerateSegment, InconsistentMatchSet, NumericalFailure
from .forces import (
    LOSSES,
    OBSERVATION_KINDS,
    Kind,
    angle_terms,
    direction_terms,
    kerb_terms,
    length_terms,
    object_terms,
    position_terms,
    width_terms,
)
from .geometry import rect_from_segment
from .observation import Behaviour, ObservationSet
from .road_model import RoadNetwork

log = logging.getLogger(__name__)

KIND_ORDER = (Kind.KERB_NODE, Kind.KERB_WIDTH, Kind.OBJECT_NODE, Kind.OBJECT_WIDTH, Kind.DIRECTION,
              Kind.POS, Kind.LENGTH, Kind.WIDTH, Kind.ANGLE)
DIAG_MIN = 1e-6
DIAG_MAX = 1e32
DAMPING_MIN = 1e-12
DAMPING_MAX = 1e12
TRACE_HEADER = ["iter", "timestamp", "kind", "id", "wkt", "residual"]


@dataclass
class Blocks:
    """Arrays describing all blocks of one kind (unused fields stay None)."""

    sw: np.ndarray                   # sqrt(effective weight)
    seg: np.ndarray | None = None
    node: np.ndarray | None = None
    triplet: np.ndarray | None = None
    xy: np.ndarray | None = None     # kerb point
    target: np.ndarray | None = None
    items: list | None = None        # object (polygon, class) pairs
    ids: np.ndarray | None = None    # observation-side index for tracing

    def __len__(self):
        return len(self.sw)


@dataclass
class Problem:
    network: RoadNetwork
    x0: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    free: np.ndarray                 # bool over the full parameter vector
    blocks: dict
    loss: dict                       # Kind -> (fn, scale)
    coupled: bool = False            # variant rows carry node and width derivatives

    @property
    def n_nodes(self) -> int:
        return self.network.n_nodes

    @property
    def n_segments(self) -> int:
        return self.network.n_segments

    @property
    def n_params(self) -> int:
        return len(self.x0)

    def width_index(self, seg):
        return 3 * self.n_nodes + np.asarray(seg)

    def block_counts(self) -> dict:
        return {k.value: len(self.blocks[k]) if k in self.blocks else 0 for k in KIND_ORDER}

    def split(self, x):
        n = self.n_nodes
        return x[:3 * n].reshape(n, 3), x[3 * n:]

    # -- evaluation ----------------------------------------------------------

    def residuals(self, x) -> dict:
        """Raw (unweighted) residual per kind."""
        return {k: v[0] for k, v in self._terms(x, jac=False).items()}

    def _terms(self, x, jac: bool) -> dict:
        pos, w = self.split(x)
        sn = self.network.seg_nodes
        n3 = 3 * self.n_nodes
        out = {}
        b = self.blocks.get(Kind.KERB_NODE) or self.blocks.get(Kind.KERB_WIDTH)
        if b is not None:
            i, j = sn[b.seg, 0], sn[b.seg, 1]
            r, dpi, dpj, dw = kerb_terms(b.xy, pos[i], pos[j], w[b.seg])
            ncols = np.column_stack([3 * i, 3 * i + 1, 3 * j, 3 * j + 1])
            nvals = np.column_stack([dpi, dpj])
            wcols, wvals = (n3 + b.seg)[:, None], dw[:, None]
            if self.coupled:
                ncols = wcols = np.column_stack([ncols, wcols])
                nvals = wvals = np.column_stack([nvals, wvals])
            if Kind.KERB_NODE in self.blocks:
                out[Kind.KERB_NODE] = (r, ncols, nvals)
            if Kind.KERB_WIDTH in self.blocks:
                out[Kind.KERB_WIDTH] = (r, wcols, wvals)
        b = self.blocks.get(Kind.OBJECT_NODE) or self.blocks.get(Kind.OBJECT_WIDTH)
        if b is not None:
            m = len(b)
            r = np.empty(m)
            dn = np.empty((m, 4))
            dw = np.empty((m, 1))
            for k, (poly, cls) in enumerate(b.items):
                s = b.seg[k]
                i, j = sn[s]
                r[k], dpi, dpj, dw[k, 0] = object_terms(poly, cls, pos[i], pos[j], w[s])
                dn[k] = (dpi[0], dpi[1], dpj[0], dpj[1])
            i, j = sn[b.seg, 0], sn[b.seg, 1]
            ncols = np.column_stack([3 * i, 3 * i + 1, 3 * j, 3 * j + 1])
            wcols = (n3 + b.seg)[:, None]
            if self.coupled:
                ncols = wcols = np.column_stack([ncols, wcols])
                dn = dw = np.column_stack([dn, dw])
            if Kind.OBJECT_NODE in self.blocks:
                out[Kind.OBJECT_NODE] = (r, ncols, dn)
            if Kind.OBJECT_WIDTH in self.blocks:
                out[Kind.OBJECT_WIDTH] = (r, wcols, dw)
        b = self.blocks.get(Kind.DIRECTION)
        if b is not None:
            i, j = sn[b.seg, 0], sn[b.seg, 1]
            r, dpi, dpj = direction_terms(b.target, pos[i], pos[j])
            out[Kind.DIRECTION] = (r, np.column_stack([3 * i, 3 * i + 1, 3 * j, 3 * j + 1]),
                                   np.column_stack([dpi, dpj]))
        b = self.blocks.get(Kind.POS)
        if b is not None:
            n = b.node
            r, g = position_terms(pos[n], self.network.initial_positions[n])
            out[Kind.POS] = (r, np.column_stack([3 * n, 3 * n + 1, 3 * n + 2]), g)
        b = self.blocks.get(Kind.LENGTH)
        if b is not None:
            i, j = sn[b.seg, 0], sn[b.seg, 1]
            r, dpi, dpj = length_terms(pos[i], pos[j], self.network.initial_lengths[b.seg])
            out[Kind.LENGTH] = (r, np.column_stack([3 * i, 3 * i + 1, 3 * j, 3 * j + 1]),
                                np.column_stack([dpi, dpj]))
        b = self.blocks.get(Kind.WIDTH)
        if b is not None:
            r, g = width_terms(w[b.seg], self.network.initial_widths[b.seg])
            out[Kind.WIDTH] = (r, (n3 + b.seg)[:, None], g[:, None])
        b = self.blocks.get(Kind.ANGLE)
        if b is not None:
            t = self.network.angle_triplets[b.triplet]
            r, g = angle_terms(pos[t[:, 0]], pos[t[:, 1]], pos[t[:, 2]],
                               self.network.initial_angles[b.triplet])
            j = t[:, 1]
            out[Kind.ANGLE] = (r, np.column_stack([3 * j, 3 * j + 1]), g)
        return out

    def cost(self, x) -> tuple[float, dict]:
        """Robust cost 0.5 * sum rho(w r^2) and its per-kind breakdown."""
        terms = self._terms(x, jac=False)
        total, parts = 0.0, {}
        for k in KIND_ORDER:
            if k not in terms:
                continue
            r = terms[k][0]
            s = (self.blocks[k].sw * r) ** 2
            fn, scale = self.loss[k]
            c = 0.5 * float(np.sum(fn(s, scale)[0]))
            parts[k.value] = c
            total += c
        return total, parts

    def linearise(self, x, free_cols: np.ndarray):
        """
        Reweighted residual vector and sparse jacobian restricted to the
        columns flagged in ``free_cols`` (bool over the full vector).
        """
        terms = self._terms(x, jac=True)
        colmap = np.full(self.n_params, -1, dtype=np.int64)
        colmap[free_cols] = np.arange(int(free_cols.sum()))
        res, rows, cols, vals = [], [], [], []
        offset = 0
        for k in KIND_ORDER:
            if k not in terms:
                continue
            r, c, v = terms[k]
            sw = self.blocks[k].sw
            fn, scale = self.loss[k]
            rw = sw * r
            _, d1, _ = fn(rw ** 2, scale)
            scale_row = np.sqrt(d1) * sw
            bad = ~np.isfinite(r) | ~np.all(np.isfinite(v), axis=1)
            if bad.any():
                raise NumericalFailure(f"non-finite residual or jacobian in {k.value} block",
                                       k.value, int(np.flatnonzero(bad)[0]))
            res.append(np.sqrt(d1) * rw)
            m = colmap[c]
            keep = m >= 0
            rr = np.broadcast_to(np.arange(offset, offset + len(r))[:, None], c.shape)
            rows.append(rr[keep])
            cols.append(m[keep])
            vals.append((v * scale_row[:, None])[keep])
            offset += len(r)
        nfree = int(free_cols.sum())
        if offset == 0:
            return np.zeros(0), sp.csr_matrix((0, nfree))
        jac = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                            shape=(offset, nfree))
        return np.concatenate(res), jac


# --------------------------------------------------------------------------
# assembly
# --------------------------------------------------------------------------

def _check_matchset(network, matchset, obs):
    sizes = ((matchset.kerb_seg, obs.n_kerb), (matchset.dir_seg, obs.n_dir),
             (matchset.object_seg, len(obs.objects)))
    for arr, n in sizes:
        if len(arr) != n:
            raise InconsistentMatchSet("match set does not belong to these observations")
        if len(arr) and (arr.max() >= network.n_segments or arr.min() < -1):
            raise InconsistentMatchSet("match set references a segment outside the network")


def build_problem(network: RoadNetwork, matchset, obs: ObservationSet, estimates, config: Config | None = None,
                  no_regularisation: bool = False) -> Problem:
    cfg = config or Config()
    wt = cfg.weights.without_regularisation() if no_regularisation else cfg.weights
    _check_matchset(network, matchset, obs)
    if estimates is not None and len(estimates) not in (0, network.n_segments):
        raise InconsistentMatchSet("one direction estimate per segment expected")
    blocks = {}

    def add(kind, sw, **kw):
        keep = sw > 0
        if not keep.any():
            return
        fields_ = {k: (v[keep] if isinstance(v, np.ndarray) else [v[i] for i in np.flatnonzero(keep)])
                   for k, v in kw.items()}
        blocks[kind] = Blocks(np.sqrt(sw[keep]), **fields_)

    k = np.flatnonzero(matchset.kerb_seg >= 0)
    kw = wt.kerb * obs.kerb_weight[k]
    add(Kind.KERB_NODE, kw, seg=matchset.kerb_seg[k], xy=obs.kerb_xy[k], ids=k)
    add(Kind.KERB_WIDTH, kw, seg=matchset.kerb_seg[k], xy=obs.kerb_xy[k], ids=k)
    if Kind.KERB_NODE in blocks and Kind.KERB_WIDTH in blocks:
        blocks[Kind.KERB_WIDTH] = blocks[Kind.KERB_NODE]

    k = np.array([q for q in np.flatnonzero(matchset.object_seg >= 0)
                  if obs.objects[q].cls.behaviour != Behaviour.UNDEFINED], dtype=np.int64)
    ow = np.array([wt.object * obs.objects[q].weight for q in k], dtype=float)
    items = [(obs.objects[q].polygon, obs.objects[q].cls) for q in k]
    add(Kind.OBJECT_NODE, ow, seg=matchset.object_seg[k], items=items, ids=k)
    if Kind.OBJECT_NODE in blocks:
        blocks[Kind.OBJECT_WIDTH] = blocks[Kind.OBJECT_NODE]

    if estimates:
        valid = [e for e in estimates if e.valid]
        add(Kind.DIRECTION, np.array([wt.direction * e.support_weight for e in valid], dtype=float),
            seg=np.array([e.segment_id for e in valid], dtype=np.int64),
            target=np.array([e.target_azimuth for e in valid], dtype=float))

    n, m = network.n_nodes, network.n_segments
    add(Kind.POS, np.full(n, wt.position), node=np.arange(n))
    add(Kind.LENGTH, np.full(m, wt.length), seg=np.arange(m))
    add(Kind.WIDTH, np.full(m, wt.width), seg=np.arange(m))
    t = len(network.angle_triplets)
    add(Kind.ANGLE, np.full(t, wt.angle), triplet=np.arange(t))

    loss = {}
    for kind in KIND_ORDER:
        name = cfg.loss.kind if kind in OBSERVATION_KINDS else cfg.loss.regularisation_kind
        loss[kind] = (LOSSES[name], cfg.loss.scale)

    bc = cfg.bounds
    x0 = np.concatenate([network.positions.ravel(), network.widths])
    p0 = network.initial_positions.ravel()
    w0 = network.initial_widths
    wlo = np.minimum(np.maximum(bc.width_min, w0 - bc.width_delta), w0)
    whi = np.maximum(np.minimum(bc.width_max, w0 + bc.width_delta), w0)
    lower = np.concatenate([p0 - bc.node_delta, wlo])
    upper = np.concatenate([p0 + bc.node_delta, whi])
    free = np.ones(len(x0), dtype=bool)
    if cfg.solver.freeze_z:
        free[2:3 * n:3] = False
    x0 = np.clip(x0, lower, upper)
    return Problem(network, x0, lower, upper, free, blocks, loss, cfg.solver.coupled_variants)


# --------------------------------------------------------------------------
# tracing
# --------------------------------------------------------------------------

def trace_timestamp(iteration: int) -> str:
    t = _dt.datetime(1970, 1, 1) + _dt.timedelta(seconds=iteration)
    return t.strftime("%Y-%m-%dT%H:%M:%S")


def emit_trace(problem: Problem, x, iteration: int, sink):
    """Append one trace group (segments, surfaces, block residuals) to an open text sink."""
    pos, w = problem.split(x)
    ts = trace_timestamp(iteration)
    sn = problem.network.seg_nodes
    lines = []
    for s in range(problem.n_segments):
        a, b = pos[sn[s, 0]], pos[sn[s, 1]]
        lines.append(f"{iteration};{ts};SEGMENT;{s};{wkt_io.linestring_wkt([a, b])};")
        try:
            rect = wkt_io.polygon_wkt(rect_from_segment(a, b, w[s]).vertices)
        except DegenerateSegment:
            continue
        lines.append(f"{iteration};{ts};SURFACE;{s};{rect};")
    res = problem.residuals(x)
    for kind in KIND_ORDER:
        if kind not in res:
            continue
        b = problem.blocks[kind]
        for q, r in enumerate(res[kind]):
            if kind in (Kind.KERB_NODE, Kind.KERB_WIDTH):
                geom = wkt_io.point_wkt(b.xy[q])
            elif kind in (Kind.OBJECT_NODE, Kind.OBJECT_WIDTH):
                geom = wkt_io.polygon_wkt(b.items[q][0].vertices)
            elif kind == Kind.POS:
                geom = wkt_io.point_wkt(pos[b.node[q]])
            elif kind == Kind.ANGLE:
                geom = wkt_io.point_wkt(pos[problem.network.angle_triplets[b.triplet[q], 1]])
            else:
                s = b.seg[q]
                geom = wkt_io.linestring_wkt([pos[sn[s, 0]], pos[sn[s, 1]]])
            lines.append(f"{iteration};{ts};{kind.value};{q};{geom};{float(r)!r}")
    sink.write("\n".join(lines) + "\n")


# --------------------------------------------------------------------------
# Levenberg-Marquardt
# --------------------------------------------------------------------------

@dataclass
class SolveOptions:
    g_tol: float = 1e-10
    f_tol: float = 1e-8
    max_iter: int = 100
    initial_damping: float = 1e-4
    max_alternations: int = 50

    @classmethod
    def from_config(cls, cfg: Config) -> "SolveOptions":
        s = cfg.solver
        return cls(s.g_tol, s.f_tol, s.max_iter, s.initial_damping, s.max_alternations)


@dataclass
class SolveReport:
    strategy: str
    iterations: int
    initial_cost: float
    final_cost: float
    termination: str
    wall_time: float
    breakdown: dict
    cost_history: list
    x: np.ndarray = field(repr=False, default=None)
    block_counts: dict = field(default_factory=dict)

    def summary(self) -> str:
        parts = ", ".join(f"{k}={v:.6g}" for k, v in self.breakdown.items())
        return (f"{self.strategy}: {self.iterations} iterations, cost {self.initial_cost:.9g} -> "
                f"{self.final_cost:.9g} ({self.termination}); {parts}")


def _safe_cost(problem, x):
    try:
        c, _ = problem.cost(x)
    except DegenerateSegment:
        return math.inf
    return c if math.isfinite(c) else math.inf


def _solve_linear(h, rhs):
    try:
        # symmetric mode keeps the fill-reducing ordering and diagonal pivots
        lu = spla.splu(h.tocsc(), permc_spec="MMD_AT_PLUS_A", options=dict(SymmetricMode=True))
        return lu.solve(rhs)
    except RuntimeError:       # exactly singular even after damping
        return None


def _lm(problem: Problem, x, free_cols, opt: SolveOptions, trace=None, it_offset: int = 0):
    """Run LM from x over the free columns; returns (x, iterations, termination, history)."""
    lo, hi = problem.lower[free_cols], problem.upper[free_cols]
    cost, _ = problem.cost(x)
    if not math.isfinite(cost):
        problem.linearise(x, free_cols)     # raises with the offending block
        raise NumericalFailure("non-finite initial cost")
    history = [cost]
    lam = float(opt.initial_damping)
    termination = "MAX_ITER"
    it = 0
    if not free_cols.any():
        return x, 0, "NO_FREE_PARAMETERS", history
    while it < opt.max_iter:
        if cost == 0.0:
            termination = "ZERO_COST"
            break
        r, jac = problem.linearise(x, free_cols)
        g = jac.T @ r
        xf = x[free_cols]
        active = ((xf <= lo) & (g > 0)) | ((xf >= hi) & (g < 0))
        g_eff = np.where(active, 0.0, g)
        if not np.max(np.abs(g_eff), initial=0.0) > opt.g_tol:
            termination = "GRADIENT"
            break
        inact = np.flatnonzero(~active)
        j_in = jac[:, inact] if active.any() else jac
        h = (j_in.T @ j_in).tocsr()
        diag = np.clip(h.diagonal(), DIAG_MIN, DIAG_MAX)
        accepted = False
        while lam <= DAMPING_MAX:
            step = _solve_linear(h + sp.diags(lam * diag, format="csr"), -g_eff[inact])
            if step is not None and np.all(np.isfinite(step)):
                trial = x.copy()
                idx = np.flatnonzero(free_cols)[inact]
                trial[idx] = np.clip(trial[idx] + step, problem.lower[idx], problem.upper[idx])
                new_cost = _safe_cost(problem, trial)
                if new_cost < cost:
                    accepted = True
                    break
            lam = min(lam * 2.0, DAMPING_MAX * 2.0)
        if not accepted:
            termination = "NO_PROGRESS"
            break
        lam = max(lam * 0.5, DAMPING_MIN)
        it += 1
        rel = (cost - new_cost) / cost
        x, cost = trial, new_cost
        history.append(cost)
        if trace is not None:
            emit_trace(problem, x, it_offset + it, trace)
        if rel < opt.f_tol:
            termination = "FUNCTION_TOLERANCE"
            break
    return x, it, termination, history


def solve(problem: Problem, options: SolveOptions | None = None, trace=None, x_start=None,
          it_offset: int = 0) -> SolveReport:
    """Joint LM over all free parameters. ``trace`` is an open text sink or None."""
    opt = options or SolveOptions()
    t0 = time.perf_counter()
    x = problem.x0.copy() if x_start is None else np.clip(x_start, problem.lower, problem.upper)
    x, iters, term, hist = _lm(problem, x, problem.free, opt, trace, it_offset)
    final, parts = problem.cost(x)
    return SolveReport("JOINT", iters, hist[0], final, term, time.perf_counter() - t0, parts, hist, x,
                       problem.block_counts())


def solve_alternating(problem: Problem, options: SolveOptions | None = None, trace=None, x_start=None,
                      it_offset: int = 0) -> SolveReport:
    """Alternate position-only and width-only solves until the joint cost stalls."""
    opt = options or SolveOptions()
    t0 = time.perf_counter()
    x = problem.x0.copy() if x_start is None else np.clip(x_start, problem.lower, problem.upper)
    is_width = np.zeros(problem.n_params, dtype=bool)
    is_width[3 * problem.n_nodes:] = True
    phases = (problem.free & ~is_width, problem.free & is_width)
    cost, _ = problem.cost(x)
    history = [cost]
    iters = 0
    term = "ZERO_COST" if cost == 0.0 else "MAX_ALTERNATIONS"
    for _ in range(opt.max_alternations if cost > 0 else 0):
        for cols in phases:
            x, n, _, hist = _lm(problem, x, cols, opt, trace, it_offset + iters)
            iters += n
            history.extend(hist[1:])
        new = history[-1]
        if cost - new <= opt.f_tol * cost:
            term = "FUNCTION_TOLERANCE"
            cost = new
            break
        cost = new
    final, parts = problem.cost(x)
    return SolveReport("ALTERNATING", iters, history[0], final, term, time.perf_counter() - t0, parts,
                       history, x, problem.block_counts())


def apply_solution(problem: Problem, x) -> RoadNetwork:
    net = problem.network.copy()
    pos, w = problem.split(np.asarray(x, dtype=float))
    net.positions = pos.copy()
    net.widths = w.copy()
    return net
