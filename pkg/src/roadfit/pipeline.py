"""End-to-end fit: split, prepare, match, estimate directions, build, solve."""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass

import numpy as np

from .config import Config
from .direction import estimate_all
from .matching import MatchSet, match_and_exclude
from .observation import ObservationSet, prepare_observations
from .road_model import RoadNetwork, split_polylines
from .solver import Problem, SolveOptions, SolveReport, apply_solution, build_problem, solve, solve_alternating


@dataclass
class FitResult:
    network: RoadNetwork
    report: SolveReport
    matchset: MatchSet
    observations: ObservationSet
    estimates: list
    problem: Problem


def prepare(network: RoadNetwork, observations, cfg: Config):
    """Split long segments and pack observations."""
    net = network
    if cfg.network.max_segment_length > 0:
        net = split_polylines(network, cfg.network.max_segment_length)
    if isinstance(observations, ObservationSet):
        obs = observations
    else:
        oc = cfg.observation
        obs = prepare_observations(observations, cfg.classes, oc.l1, oc.l2, oc.user_multiplier,
                                   oc.use_confidence, oc.directions_from_user)
    return net, obs


def match(net: RoadNetwork, obs: ObservationSet, cfg: Config) -> MatchSet:
    return match_and_exclude(obs, net, cfg.matching.search_radius, cfg.matching.intersection_radius_factor)


def fit(network: RoadNetwork, observations, config: Config | None = None, *, strategy: str | None = None,
        no_regularisation: bool = False, rematch_every: int | None = None, trace=None,
        matchset: MatchSet | None = None) -> FitResult:
    """
    Fit ``network`` to ``observations`` (a list of Observation or a packed
    ObservationSet). With ``rematch_every = K > 0`` the observations are
    re-matched against the current geometry every K iterations.
    """
    cfg = config or Config()
    strategy = strategy or cfg.solver.strategy
    k = cfg.matching.rematch_every if rematch_every is None else rematch_every
    t0 = time.perf_counter()
    net, obs = prepare(network, observations, cfg)
    ms = matchset if matchset is not None else match(net, obs, cfg)
    run = solve_alternating if strategy == "alternating" else solve
    opt = SolveOptions.from_config(cfg)

    total_iter = 0
    history: list = []
    while True:
        est = estimate_all(obs, ms, net.n_segments, cfg.direction.threshold_deg)
        problem = build_problem(net, ms, obs, est, cfg, no_regularisation=no_regularisation)
        budget = opt.max_iter - total_iter
        step_opt = dataclasses.replace(opt, max_iter=min(k, budget) if k > 0 else budget)
        rep = run(problem, step_opt, trace=trace, it_offset=total_iter)
        total_iter += rep.iterations
        history.extend(rep.cost_history if not history else rep.cost_history[1:])
        net = apply_solution(problem, rep.x)
        chunk_done = k > 0 and rep.iterations >= step_opt.max_iter and rep.termination == "MAX_ITER"
        if not chunk_done or total_iter >= opt.max_iter:
            break
        ms = match(net, obs, cfg)
    net.obs_count = ms.segment_counts(net.n_segments)
    report = dataclasses.replace(rep, iterations=total_iter, initial_cost=history[0], cost_history=history,
                                 wall_time=time.perf_counter() - t0)
    return FitResult(net, report, ms, obs, est, problem)


def fitted_axes(network: RoadNetwork):
    """(axis_id, coords, width) rows with the mean segment width per axis."""
    rows = []
    for aid in sorted(network.axes):
        segs = network.axes[aid].segment_ids
        if segs:
            rows.append((aid, network.axis_coords(aid), float(np.mean(network.widths[segs]))))
    return rows
