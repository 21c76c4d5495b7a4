import numpy as np
import pytest

from roadfit.postprocess import (
    cluster_widths,
    dbscan_1d,
    detect_topology_errors,
    merge_consecutive,
    propagate_widths,
    regroup,
)
from roadfit.road_model import RoadNetwork, split_polylines

from conftest import line_net, random_network
from oracles import crossing_pairs, eps_chain_partition


def partition(labels):
    groups = {}
    for i, l in enumerate(labels):
        groups.setdefault(l, set()).add(i)
    return {frozenset(g) for g in groups.values()}


def test_cluster_examples():
    labels, cw = cluster_widths([4.0, 4.1, 4.05, 7.0], [1, 1, 1, 1], 0.3)
    assert partition(labels) == {frozenset({0, 1, 2}), frozenset({3})}
    labels, cw = cluster_widths([5.0] * 4, [2, 3, 1, 1], 0.5)
    assert set(labels) == {0} and cw[0] == 5.0
    labels, cw = cluster_widths([], [], 0.5)
    assert len(labels) == 0 and len(cw) == 0


def test_cluster_weighted_median():
    labels, cw = cluster_widths([4.0, 4.2, 4.4], [1, 1, 5], 0.3)
    assert cw[0] == pytest.approx(4.4)
    labels, cw = cluster_widths([4.0, 4.2, 4.4], [1, 1, 1], 0.3)
    assert cw[0] == pytest.approx(4.2)


def test_unobserved_not_clustered():
    labels, _ = cluster_widths([4.0, 4.1, 9.0], [1, 0, 1], 0.5)
    assert labels[1] == -1 and labels[0] != labels[2]


def test_dbscan_equals_oracle():
    rng = np.random.default_rng(11)
    for _ in range(200):
        n = int(rng.integers(1, 21))
        v = np.round(rng.uniform(2, 12, n), 2)
        eps = float(rng.uniform(0.05, 1.5))
        assert partition(dbscan_1d(v, eps)) == eps_chain_partition(v, eps)


def test_propagate_examples():
    assert list(propagate_widths([5, 9, 7], [10, 0, 3], [1, 1, 1])) == [5, 5, 7]
    assert list(propagate_widths([5, 9, 7], [3, 0, 10], [1, 1, 1])) == [5, 7, 7]
    assert list(propagate_widths([5, 6, 7], [0, 0, 0], [5, 6, 7])) == [5, 6, 7]
    assert list(propagate_widths([5, 6, 7], [4, 0, 0], [1, 1, 1])) == [5, 5, 5]


def test_propagate_idempotent(rng):
    for _ in range(100):
        n = int(rng.integers(1, 15))
        w = rng.uniform(3, 9, n)
        c = rng.integers(0, 3, n)
        once = propagate_widths(w, c, w)
        assert np.array_equal(propagate_widths(once, c, w), once)


def test_merge_examples():
    c = np.column_stack([np.arange(4.0), np.zeros(4), np.zeros(4)])
    assert len(merge_consecutive(c, [5, 5, 7])) == 2
    assert len(merge_consecutive(c, [5, 7, 5])) == 3
    parts = merge_consecutive(c, [5, 5, 5])
    assert len(parts) == 1 and np.array_equal(parts[0].coords, c)


def test_regroup_preserves_geometry(rng):
    net = split_polylines(random_network(rng, n_axes=10), 3)
    net.widths = net.widths + rng.normal(0, 0.5, net.n_segments)
    net.obs_count = rng.integers(0, 4, net.n_segments)
    axes, out = regroup(net)
    for ax in axes:
        joined = np.vstack([ax.parts[0].coords] + [p.coords[1:] for p in ax.parts[1:]])
        assert np.array_equal(joined, net.axis_coords(ax.axis_id))
        assert sum(len(p.segment_ids) for p in ax.parts) == len(net.axes[ax.axis_id].segment_ids)
    assert np.array_equal(out.positions, net.positions)


def test_filiation_roundtrip():
    parent = np.array([[0, 0, 0], [7, 1, 0], [15, -2, 0], [30, 0, 0.0]])
    net = split_polylines(line_net(parent), 4)
    axes, _ = regroup(net, eps=1e9)
    assert len(axes[0].parts) == 1
    coords = axes[0].parts[0].coords
    for p in parent:
        assert np.min(np.linalg.norm(coords - p, axis=1)) < 1e-12


def planted():
    net = RoadNetwork.from_polylines([(0, [[0, 0, 0], [10, 10, 0]], 4), (1, [[0, 10, 0], [10, 0, 0]], 4),
                                      (2, [[20, 0, 0], [30, 0, 0]], 4)])
    return net


def test_planted_crossing():
    errs = detect_topology_errors(planted())
    assert [(e.seg_a, e.seg_b) for e in errs] == [(0, 1)]
    assert np.allclose(errs[0].point, [5, 5])


def grid_net(g=4, L=20.0):
    rows = []
    t = np.arange(g) * L
    for r in range(g):
        rows.append((r, np.column_stack([t, np.full(g, t[r]), np.zeros(g)]), 6.0))
    for c in range(g):
        rows.append((g + c, np.column_stack([np.full(g, t[c]), t, np.zeros(g)]), 6.0))
    return RoadNetwork.from_polylines(rows)


def test_clean_grid():
    assert detect_topology_errors(split_polylines(grid_net(), 5)) == []


def test_topology_equals_brute_force():
    rng = np.random.default_rng(5)
    pts = rng.uniform(0, 100, (1000, 2, 2))
    rows = [(k, np.column_stack([p, np.zeros(2)]), 1.0) for k, p in enumerate(pts)]
    net = RoadNetwork.from_polylines(rows)
    got = [(e.seg_a, e.seg_b) for e in detect_topology_errors(net)]
    assert got == crossing_pairs(net)


def test_topology_merge_invariant(rng):
    net = split_polylines(random_network(rng, n_axes=12), 3)
    net.obs_count = rng.integers(0, 3, net.n_segments)
    _, merged = regroup(net)
    key = lambda errs: [(e.seg_a, e.seg_b) for e in errs]
    assert key(detect_topology_errors(merged)) == key(detect_topology_errors(net))
