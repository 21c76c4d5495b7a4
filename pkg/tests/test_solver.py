import io
import math

import numpy as np
import pytest

from roadfit.config import Config
from roadfit.direction import DirectionEstimate, estimate_all
from roadfit.errors import InconsistentMatchSet
from roadfit.forces import Kind
from roadfit.matching import match_and_exclude
from roadfit.observation import Observation, prepare_observations
from roadfit.solver import (
    TRACE_HEADER,
    SolveOptions,
    build_problem,
    solve,
    solve_alternating,
    trace_timestamp,
)

from conftest import line_net


def points(xy, weight=1.0):
    return [Observation(f"p{k}", np.array([x, y, 0.0]), "kerb", weight=weight) for k, (x, y) in enumerate(xy)]


def setup(net, obs_list, cfg=None, no_reg=True, with_dirs=True):
    cfg = cfg or Config()
    obs = prepare_observations(obs_list)
    ms = match_and_exclude(obs, net, cfg.matching.search_radius, cfg.matching.intersection_radius_factor)
    est = estimate_all(obs, ms, net.n_segments) if with_dirs else None
    return build_problem(net, ms, obs, est, cfg, no_regularisation=no_reg)


def strip(y_lo=-2.0, y_hi=4.0, n=10):
    xs = np.linspace(1, 19, n)
    return [(x, y_hi) for x in xs] + [(x, y_lo) for x in xs]


def offset_and_width(problem, x):
    pos, w = problem.split(x)
    return float(np.abs(pos[:, 1] - 1.0).max()), float(w[0])


def test_block_counts_single_segment():
    p = setup(line_net([[0, 0, 0], [10, 0, 0]]), points([(5, 2), (5, -2)]))
    c = p.block_counts()
    assert c["KERB_NODE"] + c["KERB_WIDTH"] == 4
    assert c["POS"] == c["LENGTH"] == c["WIDTH"] == c["ANGLE"] == 0


def test_block_counts_regularisers():
    p = setup(line_net([[0, 0, 0], [10, 0, 0], [20, 0, 0]]), [], no_reg=False)
    c = p.block_counts()
    assert (c["POS"], c["LENGTH"], c["WIDTH"], c["ANGLE"]) == (3, 2, 2, 1)


def test_invalid_estimate_no_direction():
    net = line_net([[0, 0, 0], [10, 0, 0]])
    obs = prepare_observations(points([(5, 2)]))
    ms = match_and_exclude(obs, net, 10, 1.2)
    p = build_problem(net, ms, obs, [DirectionEstimate(0, 0.0, 0.0, False)], no_regularisation=True)
    assert Kind.DIRECTION not in p.blocks


def test_inconsistent_matchset():
    net = line_net([[0, 0, 0], [10, 0, 0]])
    obs = prepare_observations(points([(5, 2)]))
    ms = match_and_exclude(obs, net, 10, 1.2)
    ms.kerb_seg[0] = 7
    with pytest.raises(InconsistentMatchSet):
        build_problem(net, ms, obs, None)


def test_zero_residual_start():
    p = setup(line_net([[0, 0, 0], [20, 0, 0]], width=6.0), points(strip(-3, 3)))
    rep = solve(p)
    assert rep.iterations == 0 and rep.final_cost == 0.0 and rep.termination == "ZERO_COST"


def test_single_segment_recovery():
    # true axis y = 1, true width 6; start on y = 0 with width 4
    p = setup(line_net([[0, 0, 0], [20, 0, 0]]), points(strip()))
    rep = solve(p, SolveOptions(max_iter=500))
    off, w = offset_and_width(p, rep.x)
    assert off < 1e-6 and abs(w - 6.0) < 1e-6


def test_outlier_soft_l1_vs_squared():
    pts = points(strip()) + [Observation("out", np.array([10.0, 9.0, 0.0]), "kerb")]
    p = setup(line_net([[0, 0, 0], [20, 0, 0]]), pts)
    off_soft = offset_and_width(p, solve(p, SolveOptions(max_iter=500)).x)[0]
    cfg = Config()
    cfg.loss.kind = "SQUARED"
    q = setup(line_net([[0, 0, 0], [20, 0, 0]]), pts, cfg)
    off_sq = offset_and_width(q, solve(q, SolveOptions(max_iter=500)).x)[0]
    assert off_soft < 0.05
    assert off_sq > off_soft


def test_monotone_and_bounds(rng):
    cfg = Config()
    cfg.bounds.node_delta = 0.5
    cfg.bounds.width_delta = 0.5
    net = line_net([[0, 0, 0], [10, 0, 0], [20, 0, 0]])
    p = setup(net, points(strip(-4, 6)), cfg, no_reg=False)
    rep = solve(p)
    h = np.array(rep.cost_history)
    assert np.all(np.diff(h) <= 0)
    assert np.all(rep.x >= p.lower) and np.all(rep.x <= p.upper)
    # the widened strip pulls the parameters onto their bounds
    assert np.isclose(rep.x[3 * p.n_nodes:], p.upper[3 * p.n_nodes:]).all()


def test_regularisation_restores_initials(rng):
    net = line_net([[0, 0, 0], [10, 0, 0], [20, 3, 0]])
    p = setup(net, points(strip()), no_reg=False)
    cfg = Config()
    cfg.weights.kerb = 0.0
    cfg.weights.direction = 0.0
    q = setup(net, points(strip()), cfg, no_reg=False)
    start = q.x0 + np.where(q.free, rng.normal(0, 0.3, q.n_params), 0.0)
    rep = solve(q, SolveOptions(max_iter=500), x_start=start)
    assert np.abs(rep.x - q.x0).max() < 1e-4
    assert p.block_counts()["KERB_NODE"] > 0 and q.block_counts()["KERB_NODE"] == 0


def test_determinism():
    pts = points(strip()) + [Observation("out", np.array([10.0, 9.0, 0.0]), "kerb")]
    runs = []
    for _ in range(2):
        p = setup(line_net([[0, 0, 0], [10, 0, 0], [20, 0, 0]]), pts, no_reg=False)
        runs.append(solve(p))
    assert runs[0].cost_history == runs[1].cost_history
    assert np.array_equal(runs[0].x, runs[1].x)


def test_alternating_convex_matches_joint():
    # one free width, fixed geometry: convex in the single parameter
    cfg = Config()
    cfg.loss.kind = "SQUARED"
    cfg.bounds.node_delta = 0.0
    net = line_net([[0, 0, 0], [20, 0, 0]])
    pts = points([(x, 3.2) for x in range(1, 20)] + [(x, -2.6) for x in range(1, 20)])
    p = setup(net, pts, cfg, with_dirs=False)
    opt = SolveOptions(max_iter=500, f_tol=1e-14)
    a, b = solve(p, opt), solve_alternating(p, opt)
    assert abs(a.final_cost - b.final_cost) <= 1e-6
    assert np.abs(a.x - b.x).max() <= 1e-6


def test_alternating_zero_start_noop():
    p = setup(line_net([[0, 0, 0], [20, 0, 0]], width=6.0), points(strip(-3, 3)))
    rep = solve_alternating(p)
    assert rep.iterations == 0 and rep.final_cost == 0.0


def test_weight_scaling_keeps_minimiser():
    cfg = Config()
    cfg.loss.kind = "SQUARED"
    net = line_net([[0, 0, 0], [10, 0, 0], [20, 0, 0]])
    pts = points(strip())
    p = setup(net, pts, cfg, no_reg=False)
    for f in ("kerb", "object", "direction", "position", "length", "width", "angle"):
        setattr(cfg.weights, f, 3.0 * getattr(cfg.weights, f))
    q = setup(net, pts, cfg, no_reg=False)
    opt = SolveOptions(max_iter=500, f_tol=1e-14, g_tol=1e-14)
    assert np.abs(solve(p, opt).x - solve(q, opt).x).max() < 1e-5


def test_trace():
    p = setup(line_net([[0, 0, 0], [20, 0, 0]]), points(strip()), no_reg=False)
    sink = io.StringIO()
    rep = solve(p, trace=sink)
    rows = [line.split(";") for line in sink.getvalue().splitlines()]
    assert all(len(r) == len(TRACE_HEADER) for r in rows)
    iters = sorted({int(r[0]) for r in rows})
    assert iters == list(range(1, rep.iterations + 1))
    assert {r[2] for r in rows} >= {"SEGMENT", "SURFACE", "KERB_NODE", "POS"}
    assert rows[0][1] == trace_timestamp(1) == "1970-01-01T00:00:01"
    assert trace_timestamp(61) == "1970-01-01T00:01:01"
