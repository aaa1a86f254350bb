"""Independent reference implementations used only by the tests.

None of these import from the package; they are deliberately naive.
"""

from __future__ import annotations

import gzip
import math
import struct


def gini_pairwise(xs) -> float:
    """Σᵢ Σⱼ |xᵢ − xⱼ| / (2 n² x̄), the O(n²) textbook formula."""
    n = len(xs)
    total = math.fsum(xs)
    return math.fsum(abs(a - b) for a in xs for b in xs) / (2 * n * total)


def population_sigma(xs) -> float:
    mean = math.fsum(xs) / len(xs)
    return math.sqrt(math.fsum((x - mean) ** 2 for x in xs) / len(xs))


def sum_jobs_line_by_line(path) -> int:
    """Add up the S000 column with nothing but split()."""
    with gzip.open(path, "rt") as fh:
        header = fh.readline().strip().split(",")
        col = header.index("S000")
        return sum(int(line.split(",")[col]) for line in fh if line.strip())


def read_dbf(path) -> list[dict[str, str]]:
    """Minimal dBASE III reader: every field comes back as a stripped string."""
    with open(path, "rb") as fh:
        data = fh.read()
    nrecords, header_len, record_len = struct.unpack("<xxxxIHH", data[:12])
    fields = []
    pos = 32
    while data[pos] != 0x0D:
        name = data[pos : pos + 11].split(b"\0")[0].decode("ascii")
        size = data[pos + 16]
        fields.append((name, size))
        pos += 32
    rows = []
    for i in range(nrecords):
        rec = data[header_len + i * record_len : header_len + (i + 1) * record_len]
        if rec[:1] == b"*":
            continue
        off = 1
        row = {}
        for name, size in fields:
            row[name] = rec[off : off + size].decode("latin-1").strip()
            off += size
        rows.append(row)
    return rows


def point_in_rings(x: float, y: float, rings) -> bool:
    """Even-odd ray casting over every ring (exteriors and holes alike)."""
    inside = False
    for ring in rings:
        for (x1, y1), (x2, y2) in zip(ring, ring[1:]):
            if (y1 > y) != (y2 > y):
                xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
                if x < xc:
                    inside = not inside
    return inside


def distance_to_rings(x: float, y: float, rings) -> float:
    best = math.inf
    for ring in rings:
        for (x1, y1), (x2, y2) in zip(ring, ring[1:]):
            dx, dy = x2 - x1, y2 - y1
            if dx == dy == 0:
                d = math.hypot(x - x1, y - y1)
            else:
                t = max(0.0, min(1.0, ((x - x1) * dx + (y - y1) * dy) / (dx * dx + dy * dy)))
                d = math.hypot(x - (x1 + t * dx), y - (y1 + t * dy))
            best = min(best, d)
    return best


def rings_of(geojson_geometry: dict):
    """All rings of a GeoJSON Polygon/MultiPolygon as lists of (x, y)."""
    if geojson_geometry["type"] == "Polygon":
        polys = [geojson_geometry["coordinates"]]
    else:
        polys = geojson_geometry["coordinates"]
    return [[tuple(p) for p in ring] for poly in polys for ring in poly]
