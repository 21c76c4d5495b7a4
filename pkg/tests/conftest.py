import numpy as np
import pytest

from roadfit.config import Config
from roadfit.road_model import RoadNetwork


def line_net(coords, width=4.0, axis_id=0):
    return RoadNetwork.from_polylines([(axis_id, np.asarray(coords, dtype=float), width)])


def random_network(rng, n_axes=6, n_vertices=5, extent=100.0):
    """Random non-degenerate polylines, one axis each."""
    rows = []
    for aid in range(n_axes):
        p = rng.uniform(0, extent, 2)
        pts = [p]
        for _ in range(n_vertices - 1):
            p = p + rng.uniform(3, 12) * np.array([np.cos(a := rng.uniform(0, 2 * np.pi)), np.sin(a)])
            pts.append(p)
        c = np.column_stack([np.array(pts), np.zeros(len(pts))])
        rows.append((aid, c, float(rng.uniform(3, 10))))
    return RoadNetwork.from_polylines(rows)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def cfg():
    return Config()
