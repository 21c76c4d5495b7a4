"""Target segment direction from matched kerb direction pieces."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput
from .geometry import axial_azimuth, axial_distance

# relative cost difference under which two candidates count as tied
TIE_RTOL = 1e-12


@dataclass
class DirectionEstimate:
    segment_id: int
    target_azimuth: float
    support_weight: float
    valid: bool


def weighted_median_axial(azimuths, weights) -> float:
    """
    Candidate azimuth minimising sum_k w_k * axial_distance(candidate, a_k).

    Candidates are the input azimuths; near-ties (TIE_RTOL) resolve to the
    smallest azimuth.
    """
    az = np.mod(np.asarray(azimuths, dtype=float).ravel(), np.pi)
    w = np.asarray(weights, dtype=float).ravel()
    if az.size == 0 or az.size != w.size or not w.sum() > 0:
        raise EmptyInput("need at least one item with positive total weight")
    cost = (axial_distance(az[:, None], az[None, :]) * w[None, :]).sum(axis=1)
    best = cost.min()
    tied = cost <= best + TIE_RTOL * max(best, 1.0)
    return float(az[tied].min())


def axial_mean(azimuths, weights) -> float:
    """Weighted mean of axial data via double-angle vector averaging, in [0, pi)."""
    a = np.asarray(azimuths, dtype=float)
    w = np.asarray(weights, dtype=float)
    m = 0.5 * math.atan2(float((w * np.sin(2 * a)).sum()), float((w * np.cos(2 * a)).sum()))
    m = m % math.pi
    return 0.0 if m >= math.pi else m


def estimate_direction(segment_id: int, pieces, threshold_deg: float = 20.0) -> DirectionEstimate:
    """
    ``pieces`` is a sequence of KerbSegmentObs or an ``(a, b, weight)`` triple of arrays.
    """
    if not threshold_deg > 0:
        raise ValueError("threshold must be positive")
    if isinstance(pieces, tuple) and len(pieces) == 3 and isinstance(pieces[0], np.ndarray):
        a, b, w = pieces
    else:
        pieces = list(pieces)
        a = np.array([p.a[:2] for p in pieces]).reshape(-1, 2)
        b = np.array([p.b[:2] for p in pieces]).reshape(-1, 2)
        w = np.array([p.weight for p in pieces], dtype=float)
    if len(w) == 0 or not w.sum() > 0:
        return DirectionEstimate(segment_id, 0.0, 0.0, False)
    az = axial_azimuth(a, b)
    med = weighted_median_axial(az, w)
    near = axial_distance(az, med) < math.radians(threshold_deg)
    support = float(w[near].sum())
    return DirectionEstimate(segment_id, axial_mean(az[near], w[near]), support, support > 0)


def estimate_all(obs, matchset, n_segments: int, threshold_deg: float = 20.0) -> list[DirectionEstimate]:
    """One estimate per segment (invalid where no direction pieces matched)."""
    seg = matchset.dir_seg
    order = np.argsort(seg, kind="stable")
    seg_sorted = seg[order]
    bounds = np.searchsorted(seg_sorted, np.arange(n_segments + 1))
    out = []
    for s in range(n_segments):
        idx = order[bounds[s]:bounds[s + 1]]
        if len(idx) == 0:
            out.append(DirectionEstimate(s, 0.0, 0.0, False))
            continue
        out.append(estimate_direction(s, (obs.dir_a[idx], obs.dir_b[idx], obs.dir_weight[idx]), threshold_deg))
    return out


def write_estimates(path, estimates):
    from .wkt_io import write_rows

    write_rows(path, ["seg_id", "target_azimuth_deg", "support_weight", "valid"],
               ((e.segment_id, repr(math.degrees(e.target_azimuth)), repr(e.support_weight),
                 str(e.valid).lower()) for e in estimates))
