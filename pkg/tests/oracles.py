"""Independent brute-force oracles used by the tests."""

import itertools
import math

import numpy as np
import shapely

from roadfit.geometry import cross2


def surfaces(net):
    """Shapely rectangles of every segment surface, built from the corner formula."""
    out = []
    for s in range(net.n_segments):
        i, j = net.seg_nodes[s]
        a, b = net.positions[i, :2], net.positions[j, :2]
        u = (b - a) / np.linalg.norm(b - a)
        n = np.array([-u[1], u[0]]) * net.widths[s] / 2
        out.append(shapely.Polygon([a - n, b - n, b + n, a + n]))
    return out


def nearest_surface(geoms, net, radius):
    """O(N M) nearest-surface assignment; lowest segment id on ties, -1 beyond radius."""
    polys = np.array(surfaces(net), dtype=object)
    d = shapely.distance(np.asarray(geoms, dtype=object)[:, None], polys[None, :])
    k = np.argmin(d, axis=1)
    return np.where(d[np.arange(len(k)), k] <= radius, k, -1).astype(np.int64)


def axial_median_scan(az, w):
    """Exhaustive scan over candidate azimuths; smallest azimuth among exact minimisers."""
    az = np.mod(np.asarray(az, dtype=float), np.pi)
    best, arg = np.inf, None
    for c in sorted(az):
        cost = 0.0
        for a, wk in zip(az, w):
            d = abs(c - a) % np.pi
            cost += wk * min(d, np.pi - d)
        if arg is None or cost < best - 1e-12 * max(best, 1.0):
            best, arg = cost, c
    return arg, best


def eps_chain_partition(values, eps):
    """Connected components of the graph |v_i - v_j| <= eps (min_pts = 1 DBSCAN)."""
    n = len(values)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in itertools.combinations(range(n), 2):
        if abs(values[i] - values[j]) <= eps:
            parent[find(i)] = find(j)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), set()).add(i)
    return {frozenset(g) for g in groups.values()}


def crossing_pairs(net):
    """O(N^2) proper-crossing scan using shapely's crosses predicate on every pair."""
    lines = shapely.linestrings(net.positions[net.seg_nodes][:, :, :2])
    hit = shapely.crosses(lines[:, None], lines[None, :])
    sn = net.seg_nodes
    share = (sn[:, None, :, None] == sn[None, :, None, :]).any(axis=(2, 3))
    i, j = np.nonzero(np.triu(hit & ~share, 1))
    return list(zip(i.tolist(), j.tolist()))


def fd(f, x, h=1e-6):
    """Central finite differences of a scalar function."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for k in range(len(x)):
        up, dn = x.copy(), x.copy()
        up[k] += h
        dn[k] -= h
        g[k] = (f(up) - f(dn)) / (2 * h)
    return g


def rel_err(a, b):
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / max(np.linalg.norm(b), 1e-12))


def random_config(rng):
    """Segment of length 3..20 and an observation more than 1e-3 m off its axis."""
    while True:
        pi = rng.uniform(-20, 20, 2)
        a = rng.uniform(0, 2 * math.pi)
        pj = pi + rng.uniform(3, 20) * np.array([math.cos(a), math.sin(a)])
        ob = rng.uniform(-25, 25, 2)
        w = rng.uniform(1, 12)
        if abs(cross2(pj - pi, ob - pi)) / np.linalg.norm(pj - pi) > 1e-3:
            return ob, pi, pj, w
