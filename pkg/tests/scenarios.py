"""Shared synthetic scenario runs for the end-to-end and acceptance tests."""

import numpy as np

from roadfit.config import Config
from roadfit.evaluation import evaluate, sample_ground_truth
from roadfit.pipeline import fit
from roadfit.synth import ScenarioSpec, generate


def grid_spec(seed=0, **kw):
    base = dict(kind="grid", grid_size=5, block_length=50.0, max_segment_length=10.0, node_jitter=1.5,
                width_error=2.0, kerb_step=1.0, seed=seed)
    base.update(kw)
    return ScenarioSpec(**base)


def scenario_config(**solver):
    cfg = Config()
    # the generator already splits to 10 m; jitter must not trigger a second split
    cfg.network.max_segment_length = 0.0
    for k, v in solver.items():
        section, key = k.split("__")
        setattr(getattr(cfg, section), key, v)
    return cfg


def eval_network(sc, net):
    samples, excluded = sample_ground_truth(sc.ground_truth, 2.0, sc.true_network, 1.2)
    return evaluate(samples, net, excluded=excluded)


def run(sc, cfg=None, **fit_kw):
    cfg = cfg or scenario_config()
    res = fit(sc.initial_network, sc.observations, cfg, **fit_kw)
    return res, eval_network(sc, res.network)
