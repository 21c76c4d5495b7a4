import math

import numpy as np
import pytest
import shapely

from roadfit.errors import EmptySamples
from roadfit.evaluation import (
    evaluate,
    histogram,
    sample_ground_truth,
    sample_polyline,
    surface_distances,
    write_report,
)
from roadfit.road_model import RoadNetwork

from conftest import line_net, random_network
from oracles import surfaces


def test_sample_polyline():
    s = sample_polyline(np.array([[0, 0, 0], [5, 0, 0.0]]), 2)
    assert np.allclose(s[:, 0], [0, 2, 4])


def test_exact_cover_is_zero():
    net = line_net([[0, 0, 0], [20, 0, 0]], width=6)
    gt = [np.array([[0, 3, 0], [20, 3, 0.0]]), np.array([[0, -3, 0], [20, -3, 0.0]])]
    samples, _ = sample_ground_truth(gt, 2.0)
    rep = evaluate(samples, net)
    assert rep.mean == rep.median == 0.0


def test_one_metre_outside():
    net = line_net([[0, 0, 0], [20, 0, 0]], width=4)
    samples, _ = sample_ground_truth([np.array([[0, 3, 0], [20, 3, 0.0]])], 2.0)
    rep = evaluate(samples, net)
    assert rep.mean == pytest.approx(1.0) and rep.median == pytest.approx(1.0) and rep.std == pytest.approx(0, abs=1e-12)


def test_equals_brute_force(rng):
    for _ in range(5):
        net = random_network(rng, n_axes=15)
        samples = rng.uniform(-10, 120, (400, 2))
        polys = surfaces(net)
        oracle = np.array([min(p.distance(q) for q in polys) for p in shapely.points(samples)])
        rep = evaluate(samples, net)
        assert rep.mean == pytest.approx(oracle.mean(), rel=1e-9)
        assert rep.median == pytest.approx(np.median(oracle), rel=1e-9)


def test_rigid_invariance(rng):
    net = random_network(rng)
    samples = rng.uniform(0, 100, (200, 2))
    th = 0.7
    rot = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    moved = net.copy()
    moved.positions[:, :2] = moved.positions[:, :2] @ rot.T + 5
    a, b = evaluate(samples, net), evaluate(samples @ rot.T + 5, moved)
    assert b.mean == pytest.approx(a.mean, rel=1e-9)


def test_adding_segment_never_increases(rng):
    net = random_network(rng, n_axes=5)
    bigger = RoadNetwork.from_polylines([(a, net.axis_coords(a), 5.0) for a in net.axes] +
                                        [(99, np.array([[0, 0, 0], [100, 100, 0.0]]), 5.0)])
    smaller = RoadNetwork.from_polylines([(a, net.axis_coords(a), 5.0) for a in net.axes])
    samples = rng.uniform(0, 100, (300, 2))
    assert np.all(surface_distances(samples, bigger) <= surface_distances(samples, smaller) + 1e-12)


def test_histogram():
    d = np.array([0.0, 0.05, 0.1, 0.15, 4.99, 5.0, 7.0])
    h = histogram(d, 0.1, 5.0)
    assert h.sum() == len(d)
    assert h[0] == 2 and h[1] == 2 and h[49] == 1 and h[-1] == 2


def test_intersection_exclusion():
    net = RoadNetwork.from_polylines([(0, [[-20, 0, 0], [0, 0, 0], [20, 0, 0]], 4),
                                      (1, [[0, -20, 0], [0, 0, 0], [0, 20, 0]], 4)])
    samples, excluded = sample_ground_truth([np.array([[-20, 2, 0], [20, 2, 0.0]])], 1.0, net, 1.2)
    assert excluded > 0
    assert np.all(np.hypot(samples[:, 0], samples[:, 1]) >= 2.4)


def test_empty_and_report(tmp_path):
    with pytest.raises(EmptySamples):
        evaluate(np.zeros((0, 2)), line_net([[0, 0, 0], [1, 0, 0]]))
    rep = evaluate(np.array([[0.5, 3.0]]), line_net([[0, 0, 0], [1, 0, 0]], width=2))
    write_report(tmp_path / "r.csv", rep)
    text = (tmp_path / "r.csv").read_text()
    assert text.startswith("section;key;value\nstats;mean;2.0")
