"""Distance from sampled ground-truth kerb points to the nearest implicit road surface."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import shapely

from . import wkt_io
from .errors import EmptySamples
from .geometry import EPS_LEN, segment_frames_v
from .matching import intersection_disks, points_in_disks
from .road_model import RoadNetwork


@dataclass
class EvalReport:
    mean: float
    median: float
    std: float
    count: int
    excluded: int
    bin_width: float
    histogram: np.ndarray        # counts of right-open bins; last entry is the overflow bucket
    overflow: float

    def text(self) -> str:
        return "\n".join([
            f"{'samples':>10} {'excluded':>10} {'mean (m)':>10} {'median (m)':>11} {'std (m)':>10}",
            f"{self.count:>10d} {self.excluded:>10d} {self.mean:>10.4f} {self.median:>11.4f} {self.std:>10.4f}",
        ])


def sample_polyline(coords, step: float) -> np.ndarray:
    """Points at arc-length multiples of ``step`` (start and, when reached, end included)."""
    c = np.asarray(coords, dtype=float)
    if len(c) < 2:
        return c[:, :2].copy()
    seg = np.hypot(*np.diff(c[:, :2], axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    n = int(math.floor(total / step + 1e-9))
    s = np.arange(n + 1) * step
    s = np.minimum(s, total)
    return np.column_stack([np.interp(s, cum, c[:, 0]), np.interp(s, cum, c[:, 1])])


def sample_ground_truth(lines, step: float = 2.0, network: RoadNetwork | None = None,
                        radius_factor: float = 1.2):
    """
    Sample every line every ``step`` metres and drop samples inside the
    intersection disks of ``network``. Returns ``(samples (n, 2), n_excluded)``.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    parts = [sample_polyline(c, step) for c in lines]
    pts = np.vstack(parts) if parts else np.zeros((0, 2))
    if network is None or len(pts) == 0:
        return pts, 0
    centres, radii = intersection_disks(network, radius_factor)
    inside = points_in_disks(pts, centres, radii)
    return pts[~inside], int(inside.sum())


def surface_polygons(network: RoadNetwork):
    a, b = network.segment_endpoints()
    ok = network.segment_lengths() > EPS_LEN
    a, b, w = a[ok, :2], b[ok, :2], network.widths[ok]
    _, _, n = segment_frames_v(a, b)
    off = n * (w / 2)[:, None]
    rings = np.stack([a - off, b - off, b + off, a + off], axis=1)
    return shapely.polygons(rings)


def surface_distances(samples, network: RoadNetwork) -> np.ndarray:
    """Distance to the nearest surface (0 inside any surface)."""
    pts = shapely.points(np.asarray(samples, dtype=float).reshape(-1, 2))
    polys = surface_polygons(network)
    if len(polys) == 0:
        return np.full(len(pts), np.inf)
    tree = shapely.STRtree(polys)
    idx, dist = tree.query_nearest(pts, return_distance=True, all_matches=False)
    out = np.full(len(pts), np.inf)
    out[idx[0]] = dist
    return out


def histogram(d, bin_width: float = 0.1, overflow: float = 5.0) -> np.ndarray:
    nbins = int(round(overflow / bin_width))
    k = np.floor(np.asarray(d) / bin_width + 1e-12).astype(np.int64)
    k = np.where(np.asarray(d) >= overflow, nbins, np.minimum(k, nbins))
    return np.bincount(k, minlength=nbins + 1)


def evaluate(samples, network: RoadNetwork, bin_width: float = 0.1, overflow: float = 5.0,
             excluded: int = 0) -> EvalReport:
    samples = np.asarray(samples, dtype=float).reshape(-1, 2)
    if len(samples) == 0:
        raise EmptySamples("no ground-truth samples to evaluate")
    d = surface_distances(samples, network)
    return EvalReport(float(d.mean()), float(np.median(d)), float(d.std()), len(d), int(excluded),
                      bin_width, histogram(d, bin_width, overflow), overflow)


def write_report(path, report: EvalReport):
    rows = [("stats", "mean", repr(report.mean)), ("stats", "median", repr(report.median)),
            ("stats", "std", repr(report.std)), ("stats", "count", report.count),
            ("stats", "excluded", report.excluded)]
    for k, c in enumerate(report.histogram):
        label = (f"[{k * report.bin_width:.10g},{(k + 1) * report.bin_width:.10g})"
                 if k < len(report.histogram) - 1 else f">={report.overflow:.10g}")
        rows.append(("histogram", label, int(c)))
    wkt_io.write_rows(path, ["section", "key", "value"], rows)
