"""
Command-line interface.

    roadfit fit      --axes A.csv --observations O.csv --out-segments S.csv [...]
    roadfit match    --axes A.csv --observations O.csv --out M.csv
    roadfit eval     --segments S.csv --ground-truth G.csv [--exclusion-axes T.csv]
    roadfit regroup  --segments S.csv --out R.csv [--topology-out E.csv]
    roadfit synth    --out-dir DIR [--kind grid --seed 0 ...]
    roadfit config   --dump

Exit codes: 0 success, 1 domain error, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

from . import wkt_io
from .config import Config, dump_config, load_config, set_value
from .errors import ConfigError, RoadFitError
from .evaluation import evaluate, sample_ground_truth, write_report
from .matching import read_matches, write_matches
from .observation import load_observations, save_observations
from .pipeline import fit, fitted_axes, match, prepare
from .postprocess import detect_topology_errors, regroup, write_regrouped, write_topology_errors
from .road_model import RoadNetwork
from .solver import TRACE_HEADER
from .synth import ScenarioSpec, generate

log = logging.getLogger("roadfit")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _config(args) -> Config:
    cfg = load_config(args.config) if getattr(args, "config", None) else Config()
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        set_value(cfg, key.strip(), value)
    return cfg.validate()


def _network(path) -> RoadNetwork:
    return RoadNetwork.from_polylines(wkt_io.read_axes(path))


def _write_report(path, report):
    data = {
        "strategy": report.strategy,
        "iterations": report.iterations,
        "termination": report.termination,
        "initial_cost": report.initial_cost,
        "final_cost": report.final_cost,
        "breakdown": report.breakdown,
        "block_counts": report.block_counts,
        "cost_history": report.cost_history,
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=1)
        fh.write("\n")


# -- commands ---------------------------------------------------------------

def cmd_fit(args) -> int:
    cfg = _config(args)
    net = _network(args.axes)
    observations = load_observations(args.observations, cfg.classes)
    matchset = None
    if args.matches:
        split_net, obs = prepare(net, observations, cfg)
        matchset = read_matches(args.matches, obs, split_net.n_segments)
        observations = obs
    trace_cm = open(args.trace, "w", encoding="utf-8") if args.trace else nullcontext()
    with trace_cm as trace:
        if trace is not None:
            trace.write(";".join(TRACE_HEADER) + "\n")
        res = fit(net, observations, cfg, strategy=args.strategy, no_regularisation=args.no_regularisation,
                  rematch_every=args.rematch_every, trace=trace, matchset=matchset)
    wkt_io.write_segments(args.out_segments, res.network)
    if args.out_axes:
        wkt_io.write_axes(args.out_axes, fitted_axes(res.network))
    if args.report:
        _write_report(args.report, res.report)
    if args.out_matches:
        write_matches(args.out_matches, res.matchset, res.observations)
    log.info("%s", res.report.summary())
    log.info("wall time %.2f s", res.report.wall_time)
    return 0


def cmd_match(args) -> int:
    cfg = _config(args)
    net, obs = prepare(_network(args.axes), load_observations(args.observations, cfg.classes), cfg)
    ms = match(net, obs, cfg)
    write_matches(args.out, ms, obs)
    if args.out_segments:
        net.obs_count = ms.segment_counts(net.n_segments)
        wkt_io.write_segments(args.out_segments, net)
    return 0


def _read_network_any(path) -> RoadNetwork:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split(";")[0].strip()
    if header == "seg_id":
        return RoadNetwork.from_segments(wkt_io.read_segments(path))
    return _network(path)


def cmd_eval(args) -> int:
    cfg = _config(args)
    net = _read_network_any(args.segments)
    excl = _read_network_any(args.exclusion) if args.exclusion else net
    ec = cfg.evaluation
    samples, excluded = sample_ground_truth(wkt_io.read_lines(args.ground_truth), ec.sample_step, excl,
                                            cfg.matching.intersection_radius_factor)
    rep = evaluate(samples, net, ec.bin_width, ec.overflow, excluded)
    if args.out:
        write_report(args.out, rep)
    print(rep.text())
    return 0


def cmd_regroup(args) -> int:
    cfg = _config(args)
    net = RoadNetwork.from_segments(wkt_io.read_segments(args.segments))
    axes, regrouped = regroup(net, cfg.postprocess.dbscan_eps, cfg.postprocess.min_pts)
    write_regrouped(args.out, axes)
    if args.out_segments:
        wkt_io.write_segments(args.out_segments, regrouped)
    errors = detect_topology_errors(regrouped)
    if args.topology_out:
        write_topology_errors(args.topology_out, errors)
    log.info("%d regrouped parts, %d topology errors", sum(len(a.parts) for a in axes), len(errors))
    return 0


def cmd_synth(args) -> int:
    spec = ScenarioSpec(kind=args.kind, grid_size=args.grid_size, block_length=args.block_length,
                        n_spokes=args.spokes, max_segment_length=args.max_segment_length,
                        node_jitter=args.node_jitter, width_error=args.width_error, kerb_step=args.kerb_step,
                        kerb_jitter=args.kerb_jitter, outlier_rate=args.outlier_rate,
                        outlier_offset=args.outlier_offset,
                        objects=tuple(args.objects.split(",")) if args.objects else (), seed=args.seed)
    sc = generate(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    wkt_io.write_axes(out / "true_axes.csv", fitted_axes(sc.true_network))
    wkt_io.write_segments(out / "true_segments.csv", sc.true_network)
    wkt_io.write_axes(out / "axes.csv", fitted_axes(sc.initial_network))
    wkt_io.write_lines(out / "ground_truth.csv", sc.ground_truth)
    save_observations(out / "observations.csv", sc.observations)
    return 0


def cmd_config(args) -> int:
    cfg = _config(args)
    sys.stdout.write(dump_config(cfg))
    return 0


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="roadfit", description="Fit road networks to kerb and object observations.")
    p.add_argument("--threads", type=int, default=None, help="cap native thread pools (default: ROADFIT_THREADS)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
        sp.add_argument("--config", help="INI configuration file")
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override one config value")

    f = sub.add_parser("fit", help="fit node positions and widths")
    common(f)
    f.add_argument("--axes", required=True)
    f.add_argument("--observations", required=True)
    f.add_argument("--matches", help="use this match file instead of matching")
    f.add_argument("--out-segments", required=True)
    f.add_argument("--out-axes")
    f.add_argument("--out-matches")
    f.add_argument("--report", help="JSON solve report (deterministic)")
    f.add_argument("--trace", help="per-iteration trace CSV")
    f.add_argument("--strategy", choices=["joint", "alternating"])
    f.add_argument("--no-regularisation", action="store_true")
    f.add_argument("--rematch-every", type=int, default=None, metavar="K")
    f.set_defaults(func=cmd_fit)

    m = sub.add_parser("match", help="match observations to segments")
    common(m)
    m.add_argument("--axes", required=True)
    m.add_argument("--observations", required=True)
    m.add_argument("--out", required=True)
    m.add_argument("--out-segments")
    m.set_defaults(func=cmd_match)

    e = sub.add_parser("eval", help="distance from ground-truth kerbs to the road surfaces")
    common(e)
    e.add_argument("--segments", required=True, help="segment or axis CSV")
    e.add_argument("--ground-truth", required=True)
    e.add_argument("--exclusion", help="network defining intersection disks (default: --segments)")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("regroup", help="regroup segments by width and check topology")
    common(r)
    r.add_argument("--segments", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--out-segments")
    r.add_argument("--topology-out")
    r.set_defaults(func=cmd_regroup)

    s = sub.add_parser("synth", help="generate a synthetic scenario")
    s.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--kind", default="grid", choices=["grid", "radial", "single"])
    s.add_argument("--grid-size", type=int, default=5)
    s.add_argument("--block-length", type=float, default=50.0)
    s.add_argument("--spokes", type=int, default=5)
    s.add_argument("--max-segment-length", type=float, default=10.0)
    s.add_argument("--node-jitter", type=float, default=0.0)
    s.add_argument("--width-error", type=float, default=0.0)
    s.add_argument("--kerb-step", type=float, default=1.0)
    s.add_argument("--kerb-jitter", type=float, default=0.0)
    s.add_argument("--outlier-rate", type=float, default=0.0)
    s.add_argument("--outlier-offset", type=float, default=5.0)
    s.add_argument("--objects", default="", help="comma-separated class names")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    c = sub.add_parser("config", help="print the effective configuration")
    common(c)
    c.add_argument("--dump", action="store_true")
    c.set_defaults(func=cmd_config)
    return p


def _limit_threads(n):
    if n is None:
        env = os.environ.get("ROADFIT_THREADS")
        n = int(env) if env else None
    if n is not None and n < 1:
        raise UsageError("--threads must be >= 1")
    return n


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        args = build_parser().parse_args(argv)
        threads = _limit_threads(args.threads)
    except UsageError as exc:
        print(f"roadfit: error: {exc}", file=sys.stderr)
        return 2
    except ValueError:
        print("roadfit: error: ROADFIT_THREADS must be an integer", file=sys.stderr)
        return 2
    if not args.verbose:
        logging.getLogger().setLevel(logging.WARNING)
    try:
        if threads is not None:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=threads):
                return args.func(args)
        return args.func(args)
    except ConfigError as exc:
        print(f"roadfit: config error: {exc}", file=sys.stderr)
        return 2
    except (RoadFitError, OSError) as exc:
        print(f"roadfit: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
