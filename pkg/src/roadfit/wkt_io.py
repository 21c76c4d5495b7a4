"""
Semicolon-separated CSV files with a WKT geometry column.

Writing uses ``repr`` of floats so that values round-trip exactly and output
is byte-stable across runs. Parsing goes through shapely.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
import shapely
import shapely.wkt

from .errors import ParseError


def _num(x) -> str:
    return repr(float(x))


def point_wkt(p) -> str:
    p = list(p)
    if len(p) >= 3:
        return f"POINT Z ({_num(p[0])} {_num(p[1])} {_num(p[2])})"
    return f"POINT ({_num(p[0])} {_num(p[1])})"


def linestring_wkt(coords) -> str:
    c = np.asarray(coords, dtype=float)
    if c.shape[1] >= 3:
        body = ", ".join(f"{_num(x)} {_num(y)} {_num(z)}" for x, y, z in c[:, :3])
        return f"LINESTRING Z ({body})"
    body = ", ".join(f"{_num(x)} {_num(y)}" for x, y in c)
    return f"LINESTRING ({body})"


def polygon_wkt(vertices) -> str:
    v = np.asarray(vertices, dtype=float)[:, :2]
    ring = np.vstack([v, v[:1]])
    body = ", ".join(f"{_num(x)} {_num(y)}" for x, y in ring)
    return f"POLYGON (({body}))"


def parse_wkt(text: str, row: int | None = None):
    """Return ``(kind, coords)`` with kind in {'point', 'line', 'polygon'}; coords (n, 3)."""
    try:
        geom = shapely.wkt.loads(text)
    except Exception as exc:  # shapely raises several GEOS error types
        raise ParseError(f"bad WKT {text[:60]!r}: {exc}", row) from None
    if geom.is_empty:
        raise ParseError("empty geometry", row)
    kind = geom.geom_type
    if kind == "Point":
        c = np.array(geom.coords, dtype=float)
        return "point", _pad3(c)
    if kind == "LineString":
        return "line", _pad3(np.array(geom.coords, dtype=float))
    if kind == "Polygon":
        if len(geom.interiors):
            raise ParseError("polygons with holes are not supported", row)
        return "polygon", _pad3(np.array(geom.exterior.coords, dtype=float)[:-1])
    raise ParseError(f"unsupported geometry type {kind}", row)


def _pad3(c: np.ndarray) -> np.ndarray:
    c = c.reshape(-1, c.shape[-1])
    if c.shape[1] == 2:
        c = np.column_stack([c, np.zeros(len(c))])
    return c


def read_rows(path, min_fields: int) -> Iterator[tuple[int, list[str]]]:
    """Yield (1-based row number, fields); skips blank lines and a header row."""
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, fields in enumerate(csv.reader(fh, delimiter=";"), start=1):
            if not fields or all(not f.strip() for f in fields):
                continue
            if lineno == 1 and not _looks_numeric(fields[0]):
                continue
            if len(fields) < min_fields:
                raise ParseError(f"expected {min_fields} fields, got {len(fields)}", lineno)
            yield lineno, [f.strip() for f in fields]


def _looks_numeric(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence]):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(";".join(header) + "\n")
        for r in rows:
            fh.write(";".join(str(x) for x in r) + "\n")


# -- road network files -----------------------------------------------------

def read_axes(path):
    """Axis CSV: ``axis_id;LINESTRING Z (...);width``."""
    out = []
    for row, f in read_rows(path, 3):
        kind, coords = parse_wkt(f[1], row)
        if kind != "line":
            raise ParseError("axis geometry must be a LINESTRING", row)
        try:
            out.append((int(f[0]), coords, float(f[2])))
        except ValueError as exc:
            raise ParseError(str(exc), row) from None
    return out


def write_axes(path, axes: Iterable[tuple]):
    write_rows(path, ["axis_id", "wkt", "width"],
               ((aid, linestring_wkt(c), _num(w)) for aid, c, w in axes))


def read_segments(path):
    """
    Segment CSV: ``seg_id;axis_id;seq;LINESTRING Z(...);width[;initial_width;obs_count]``.

    Returns ``(seg_id, axis_id, seq, coords, width, initial_width, obs_count)``
    tuples; missing optional columns come back as None.
    """
    out = []
    for row, f in read_rows(path, 5):
        kind, coords = parse_wkt(f[3], row)
        if kind != "line" or len(coords) != 2:
            raise ParseError("segment geometry must be a 2-point LINESTRING", row)
        try:
            w0 = float(f[5]) if len(f) > 5 and f[5] else None
            cnt = int(f[6]) if len(f) > 6 and f[6] else None
            out.append((int(f[0]), int(f[1]), int(f[2]), coords, float(f[4]), w0, cnt))
        except ValueError as exc:
            raise ParseError(str(exc), row) from None
    return out


def write_segments(path, network):
    a, b = network.segment_endpoints()
    rows = (
        (s, int(network.seg_axis[s]), int(network.seg_seq[s]),
         linestring_wkt(np.vstack([a[s], b[s]])), _num(network.widths[s]),
         _num(network.initial_widths[s]), int(network.obs_count[s]))
        for s in range(network.n_segments)
    )
    write_rows(path, ["seg_id", "axis_id", "seq", "wkt", "width", "initial_width", "obs_count"], rows)


def read_lines(path):
    """Ground-truth kerb file: ``id;LINESTRING (...)``."""
    out = []
    for row, f in read_rows(path, 2):
        kind, coords = parse_wkt(f[1], row)
        if kind != "line":
            raise ParseError("expected LINESTRING", row)
        out.append(coords)
    return out


def write_lines(path, lines):
    write_rows(path, ["id", "wkt"], ((i, linestring_wkt(c)) for i, c in enumerate(lines)))
