import numpy as np
import pytest

from roadfit.errors import InvalidSpec
from roadfit.synth import ScenarioSpec, generate

from scenarios import eval_network, grid_spec, run


def test_zero_perturbation_is_exact():
    sc = generate(grid_spec(node_jitter=0.0, width_error=0.0))
    assert np.array_equal(sc.initial_network.positions, sc.true_network.positions)
    assert np.array_equal(sc.initial_network.widths, sc.true_network.widths)
    rep = eval_network(sc, sc.initial_network)
    assert rep.median == 0.0 and rep.mean == 0.0
    res, _ = run(sc, no_regularisation=True)
    assert res.report.initial_cost == 0.0 and res.report.iterations == 0


def test_perturbed_fit():
    sc = generate(grid_spec(node_jitter=1.0, width_error=2.0, seed=4))
    before = eval_network(sc, sc.initial_network)
    assert 0.5 <= before.median <= 3.0
    _, after = run(sc, no_regularisation=True)
    assert after.median < 0.05


def test_seed_repeat_identical():
    a = generate(grid_spec(seed=9, outlier_rate=0.1, kerb_jitter=0.1, objects=("car", "barrier")))
    b = generate(grid_spec(seed=9, outlier_rate=0.1, kerb_jitter=0.1, objects=("car", "barrier")))
    assert np.array_equal(a.initial_network.positions, b.initial_network.positions)
    assert len(a.observations) == len(b.observations)
    for x, y in zip(a.observations, b.observations):
        gx = x.geometry.vertices if x.kind == "polygon" else x.geometry
        gy = y.geometry.vertices if y.kind == "polygon" else y.geometry
        assert x.id == y.id and np.array_equal(gx, gy)


def test_coverage_binomial():
    p = (0.5, 0.3, 0.2)
    sc = generate(grid_spec(grid_size=8, coverage=p, seed=2))
    blocks = {}
    for ob in sc.observations:
        k = int(ob.id[1:])
        blocks.setdefault(k // 2, set()).add(k)
    # kerb runs come in (left, right) pairs per block; count observed runs per block
    n_blocks = 2 * 8 * 7
    both = sum(1 for v in blocks.values() if len(v) == 2)
    one = sum(1 for v in blocks.values() if len(v) == 1)
    for got, prob in ((both, p[0]), (one, p[1])):
        sigma = np.sqrt(n_blocks * prob * (1 - prob))
        assert abs(got - n_blocks * prob) <= 3 * sigma


def test_invalid_spec():
    for bad in (dict(kind="ring"), dict(node_jitter=-1.0), dict(outlier_rate=2.0),
                dict(coverage=(0.5, 0.5, 0.5)), dict(objects=("spaceship",))):
        with pytest.raises(InvalidSpec):
            generate(ScenarioSpec(**bad))
