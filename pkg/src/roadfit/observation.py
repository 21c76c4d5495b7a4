"""
Observations, the object-class registry, and line conversion.

Kerb observations are points (lines are densified into weighted points and,
separately, into near-constant-length direction pieces). Every other class is
an object surface held as a convex polygon.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence, Union

import numpy as np

from . import wkt_io
from .errors import EmptyLine, InvalidPolygon, ParseError, UnknownClass
from .geometry import ConvexPolygon, convex_hull, is_convex_ccw

log = logging.getLogger(__name__)


class Behaviour(str, enum.Enum):
    IN = "IN"
    OUT = "OUT"
    BORDER_IN = "BORDER_IN"
    BORDER_OUT = "BORDER_OUT"
    UNDEFINED = "UNDEFINED"


class Source(str, enum.Enum):
    SENSED = "SENSED"
    USER = "USER"
    GROUND_TRUTH = "GROUND_TRUTH"


@dataclass(frozen=True)
class ObjectClass:
    class_id: int
    name: str
    behaviour: Behaviour
    expected_border_distance: float = 0.0
    class_weight: float = 1.0
    default_precision: float = 0.4
    kerb: bool = False

    def __post_init__(self):
        if self.expected_border_distance < 0:
            raise ValueError("expected_border_distance must be >= 0")
        if self.class_weight < 0:
            raise ValueError("class_weight must be >= 0")


def default_registry() -> dict[str, ObjectClass]:
    classes = [
        ObjectClass(0, "kerb", Behaviour.BORDER_IN, 0.0, 1.0, 0.4, kerb=True),
        ObjectClass(1, "pedestrian_crossing", Behaviour.IN, 0.0, 1.0, 0.2),
        ObjectClass(2, "car", Behaviour.IN, 0.0, 1.0, 0.5),
        ObjectClass(3, "traffic_sign", Behaviour.OUT, 0.0, 1.0, 0.2),
        ObjectClass(4, "barrier", Behaviour.BORDER_OUT, 0.2, 1.0, 0.2),
        ObjectClass(5, "other", Behaviour.UNDEFINED, 0.0, 0.0, 1.0),
    ]
    return {c.name: c for c in classes}


Geometry = Union[np.ndarray, ConvexPolygon]


@dataclass
class Observation:
    id: str
    geometry: Geometry          # (3,) point, (n, 3) kerb polyline, or ConvexPolygon
    class_name: str
    weight: float = 1.0
    confidence: float = 1.0
    precision: float = 0.4
    source: Source = Source.SENSED

    @property
    def kind(self) -> str:
        if isinstance(self.geometry, ConvexPolygon):
            return "polygon"
        return "point" if np.asarray(self.geometry).ndim == 1 else "line"


@dataclass
class KerbSegmentObs:
    a: np.ndarray
    b: np.ndarray
    weight: float


# --------------------------------------------------------------------------
# line conversion
# --------------------------------------------------------------------------

def _densify(coords: np.ndarray, max_piece: float) -> np.ndarray:
    """Split each edge into ceil(len / max_piece) equal parts; drops repeated vertices."""
    c = np.asarray(coords, dtype=float)
    if c.shape[1] == 2:
        c = np.column_stack([c, np.zeros(len(c))])
    out = [c[0]]
    for p, q in zip(c[:-1], c[1:]):
        length = math.hypot(q[0] - p[0], q[1] - p[1])
        if length == 0.0:
            continue
        k = max(1, math.ceil(length / max_piece - 1e-9))
        for j in range(1, k + 1):
            out.append(p + (q - p) * (j / k))
    return np.array(out)


def lines_to_points(polyline, l1: float):
    """
    Densify a polyline so no piece exceeds ``l1`` and return ``(points, weights)``.

    Each piece carries weight length / l1, split half to each endpoint, so the
    weights sum to (polyline length) / l1.
    """
    if not l1 > 0:
        raise ValueError("l1 must be positive")
    c = np.asarray(polyline, dtype=float)
    if c.ndim != 2 or len(c) < 2:
        raise EmptyLine("polyline needs at least two vertices")
    pts = _densify(c, l1)
    if len(pts) < 2:
        raise EmptyLine("zero-length polyline")
    piece = np.hypot(*np.diff(pts[:, :2], axis=0).T) / l1
    w = np.zeros(len(pts))
    w[:-1] += piece / 2
    w[1:] += piece / 2
    return pts, w


def lines_to_direction_segments(polyline, l2: float) -> list[KerbSegmentObs]:
    """Cut a polyline into ceil(L / l2) pieces of equal arc length (weight = length)."""
    if not l2 > 0:
        raise ValueError("l2 must be positive")
    c = np.asarray(polyline, dtype=float)
    if c.ndim != 2 or len(c) < 2:
        raise EmptyLine("polyline needs at least two vertices")
    xy = c[:, :2]
    seg = np.hypot(*np.diff(xy, axis=0).T)
    total = float(seg.sum())
    if total == 0.0:
        raise EmptyLine("zero-length polyline")
    k = max(1, math.ceil(total / l2 - 1e-9))
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    cuts = np.linspace(0.0, total, k + 1)
    pts = np.column_stack([np.interp(cuts, cum, xy[:, 0]), np.interp(cuts, cum, xy[:, 1])])
    piece = total / k
    return [KerbSegmentObs(pts[i].copy(), pts[i + 1].copy(), piece) for i in range(k)]


# --------------------------------------------------------------------------
# loading / saving
# --------------------------------------------------------------------------

def _object_polygon(kind: str, coords: np.ndarray, precision: float) -> ConvexPolygon:
    half = max(precision, 0.05)
    if kind == "point":
        x, y = coords[0, 0], coords[0, 1]
        return ConvexPolygon(np.array([[x - half, y - half], [x + half, y - half],
                                       [x + half, y + half], [x - half, y + half]]))
    if kind == "line":
        offs = np.array([[-half, -half], [half, -half], [half, half], [-half, half]])
        pts = (coords[:, None, :2] + offs[None]).reshape(-1, 2)
        return ConvexPolygon.hull_of(pts)
    ring = coords[:, :2]
    if is_convex_ccw(ring):
        return ConvexPolygon(ring)
    if is_convex_ccw(ring[::-1]):
        return ConvexPolygon(ring[::-1])
    return ConvexPolygon.hull_of(ring)


def load_observations(path, registry: dict[str, ObjectClass] | None = None) -> list[Observation]:
    """
    Read ``id;WKT;class_name;weight;confidence;precision;source`` rows.

    Empty numeric fields take class defaults. Concave polygons are replaced by
    their convex hull (logged). Non-kerb points and lines become small object
    surfaces sized by their precision.
    """
    registry = registry or default_registry()
    out = []
    for row, f in wkt_io.read_rows(path, 3):
        f = f + [""] * (7 - len(f))
        name = f[2]
        cls = registry.get(name)
        if cls is None:
            raise UnknownClass(f"row {row}: unknown class {name!r}")
        kind, coords = wkt_io.parse_wkt(f[1], row)
        try:
            weight = float(f[3]) if f[3] else 1.0
            conf = float(f[4]) if f[4] else 1.0
            prec = float(f[5]) if f[5] else cls.default_precision
            source = Source(f[6]) if f[6] else Source.SENSED
        except ValueError as exc:
            raise ParseError(str(exc), row) from None
        if not (math.isfinite(weight) and weight >= 0):
            raise ParseError("weight must be finite and >= 0", row)
        if not 0.0 <= conf <= 1.0:
            raise ParseError("confidence must be in [0, 1]", row)
        if cls.kerb:
            if kind == "polygon":
                raise ParseError("kerb observations must be points or lines", row)
            geom = coords[0] if kind == "point" else coords
        else:
            if kind == "polygon" and not (is_convex_ccw(coords[:, :2]) or is_convex_ccw(coords[::-1, :2])):
                log.warning("row %d: concave polygon replaced by its convex hull", row)
            try:
                geom = _object_polygon(kind, coords, prec)
            except InvalidPolygon as exc:
                raise ParseError(str(exc), row) from None
        out.append(Observation(f[0], geom, name, weight, conf, prec, source))
    return out


def observation_wkt(ob: Observation) -> str:
    if ob.kind == "polygon":
        return wkt_io.polygon_wkt(ob.geometry.vertices)
    if ob.kind == "point":
        return wkt_io.point_wkt(ob.geometry)
    return wkt_io.linestring_wkt(ob.geometry)


def save_observations(path, observations: Iterable[Observation]):
    wkt_io.write_rows(
        path,
        ["id", "wkt", "class_name", "weight", "confidence", "precision", "source"],
        ((o.id, observation_wkt(o), o.class_name, repr(float(o.weight)), repr(float(o.confidence)),
          repr(float(o.precision)), o.source.value) for o in observations),
    )


# --------------------------------------------------------------------------
# packed form used by matching and the solver
# --------------------------------------------------------------------------

@dataclass
class ObjectObs:
    label: str
    polygon: ConvexPolygon
    cls: ObjectClass
    weight: float


@dataclass
class ObservationSet:
    """
    Array form of a prepared observation collection.

    ``kerb_weight`` / ``dir_weight`` / object ``weight`` already include the
    class weight, the USER multiplier and (optionally) the confidence.
    """

    kerb_xy: np.ndarray
    kerb_weight: np.ndarray
    kerb_labels: np.ndarray
    dir_a: np.ndarray
    dir_b: np.ndarray
    dir_weight: np.ndarray
    dir_labels: np.ndarray
    objects: list[ObjectObs] = field(default_factory=list)

    @property
    def n_kerb(self) -> int:
        return len(self.kerb_xy)

    @property
    def n_dir(self) -> int:
        return len(self.dir_a)

    @classmethod
    def empty(cls) -> "ObservationSet":
        z2 = np.zeros((0, 2))
        return cls(z2, np.zeros(0), np.zeros(0, dtype=object), z2, z2.copy(), np.zeros(0),
                   np.zeros(0, dtype=object), [])


def prepare_observations(observations: Sequence[Observation], registry: dict[str, ObjectClass] | None = None,
                         l1: float = 2.0, l2: float = 4.0, user_multiplier: float = 10.0,
                         use_confidence: bool = False, directions_from_user: bool = True) -> ObservationSet:
    registry = registry or default_registry()
    kxy, kw, kl = [], [], []
    da, db, dw, dl = [], [], [], []
    objects = []
    for ob in observations:
        cls = registry[ob.class_name]
        w = ob.weight * cls.class_weight
        if ob.source == Source.USER:
            w *= user_multiplier
        if use_confidence:
            w *= ob.confidence
        if ob.kind == "polygon":
            objects.append(ObjectObs(ob.id, ob.geometry, cls, w))
        elif ob.kind == "point":
            kxy.append(np.asarray(ob.geometry)[None, :2])
            kw.append(np.array([w]))
            kl.append(np.array([ob.id], dtype=object))
        else:
            pts, pw = lines_to_points(ob.geometry, l1)
            kxy.append(pts[:, :2])
            kw.append(pw * w)
            kl.append(np.array([f"{ob.id}:{k}" for k in range(len(pts))], dtype=object))
            if ob.source == Source.USER and not directions_from_user:
                continue
            for k, piece in enumerate(lines_to_direction_segments(ob.geometry, l2)):
                da.append(piece.a)
                db.append(piece.b)
                dw.append(piece.weight * w)
                dl.append(f"{ob.id}:d{k}")
    cat = lambda xs, shape: np.concatenate(xs) if xs else np.zeros(shape)
    return ObservationSet(
        cat(kxy, (0, 2)), cat(kw, (0,)), cat(kl, (0,)).astype(object),
        np.array(da).reshape(-1, 2), np.array(db).reshape(-1, 2), np.array(dw, dtype=float),
        np.array(dl, dtype=object), objects,
    )
