"""Map-ready outputs: state-clipped tract polygons as GeoJSON, a choropleth
style descriptor, and the per-tract density table as CSV.

Clipping only affects what is drawn.  Densities always use the census
land-area attribute, never the area of the clipped shape.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import shapely
from shapely.geometry import Polygon, mapping
from shapely.geometry.base import BaseGeometry
from shapely.prepared import prep

from .census import StateBoundary, TractRecord, normalize_orientation, polygonal_part
from .errors import InvalidGeometry, MissingColumn, OutputError, PaletteMismatch
from .stats import DensityRecord

log = logging.getLogger(__name__)

COORD_PRECISION = 6
VERTEX_TOLERANCE_DEG = 1e-9
CSV_HEADER = (
    "geoid", "population", "inbound", "outbound", "daytime_pop",
    "land_area_km2", "daytime_density", "nighttime_density", "excluded",
)
# sequential yellow-orange-red ramp, light to dark
DEFAULT_RAMP = ("#ffffb2", "#fed976", "#feb24c", "#fd8d3c", "#fc4e2a", "#e31a1c", "#b10026")


@dataclass
class ClassifiedFeature:
    geoid: str
    clipped_geometry: BaseGeometry = field(repr=False)
    density_class: int | None
    properties: dict[str, Any]


class StateClipper:
    """Intersects many tract shapes with one state outline.

    The state is prepared once; tracts wholly inside it are returned as-is.
    """

    def __init__(self, state: StateBoundary):
        self.state = state
        self._geom = _validated(state.geometry, f"state {state.fips}")
        self._prepared = prep(self._geom)
        self._bounds = self._geom.bounds

    def clip(self, geometry: BaseGeometry) -> BaseGeometry:
        geometry = _validated(geometry, "tract")
        minx, miny, maxx, maxy = geometry.bounds
        sminx, sminy, smaxx, smaxy = self._bounds
        if maxx < sminx or minx > smaxx or maxy < sminy or miny > smaxy:
            return Polygon()
        if self._prepared.contains(geometry):
            return geometry
        return normalize_orientation(polygonal_part(geometry.intersection(self._geom)))


def _validated(geometry: BaseGeometry, label: str) -> BaseGeometry:
    if geometry.is_valid:
        return geometry
    repaired = polygonal_part(shapely.make_valid(geometry))
    if repaired.is_empty or not repaired.is_valid:
        raise InvalidGeometry(f"{label}: geometry is invalid and could not be repaired")
    return repaired


def clip_to_state(tract_geometry: BaseGeometry, state: StateBoundary) -> BaseGeometry:
    """Intersection of a tract shape with the state outline (possibly empty)."""
    return StateClipper(state).clip(tract_geometry)


def classify_features(
    tracts: Iterable[TractRecord],
    records: Iterable[DensityRecord],
    classes: Mapping[str, int],
    state: StateBoundary,
) -> list[ClassifiedFeature]:
    """Clip each tract and attach its density record and class.

    Tracts that clip to nothing are dropped (and logged).  Zero-area tracts
    carry ``density_class=None``.  Output is ordered by GEOID.
    """
    by_geoid = {r.geoid: r for r in records}
    clipper = StateClipper(state)
    features = []
    for tract in sorted(tracts, key=lambda t: t.geoid):
        rec = by_geoid.get(tract.geoid)
        if rec is None:
            continue
        clipped = clipper.clip(tract.geometry)
        if clipped.is_empty:
            log.info("tract %s lies outside the state outline; dropped from the map", tract.geoid)
            continue
        original_area = tract.geometry.area
        props = feature_properties(rec, classes.get(rec.geoid))
        props["clipped_fraction"] = clipped.area / original_area if original_area > 0 else 1.0
        features.append(ClassifiedFeature(rec.geoid, clipped, props["density_class"], props))
    return features


def feature_properties(record: DensityRecord, density_class: int | None) -> dict[str, Any]:
    return {
        "geoid": record.geoid,
        "population": record.population,
        "inbound": record.inbound,
        "outbound": record.outbound,
        "daytime_pop": record.daytime_pop,
        "land_area_km2": record.land_area_km2,
        "daytime_density": record.daytime_density,
        "nighttime_density": record.nighttime_density,
        "density_class": density_class,
        "net_flow": record.net_flow,
        "excluded": record.excluded,
    }


def round_coords(coords, precision: int = COORD_PRECISION):
    if isinstance(coords, (float, int)):
        return round(float(coords), precision)
    return [round_coords(c, precision) for c in coords]


def geometry_to_geojson(geometry: BaseGeometry, precision: int = COORD_PRECISION) -> dict:
    geo = mapping(geometry)
    return {"type": geo["type"], "coordinates": round_coords(geo["coordinates"], precision)}


def _finite(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def emit_geojson(features: Iterable[ClassifiedFeature], path, precision: int = COORD_PRECISION) -> int:
    """Write an RFC 7946 FeatureCollection; returns the number of features."""
    out = []
    for f in features:
        if f.clipped_geometry.is_empty:
            log.info("dropping empty geometry for %s", f.geoid)
            continue
        out.append(
            {
                "type": "Feature",
                "id": f.geoid,
                "geometry": geometry_to_geojson(f.clipped_geometry, precision),
                "properties": {k: _finite(v) for k, v in f.properties.items()},
            }
        )
    doc = {"type": "FeatureCollection", "features": out}
    _write_text(path, json.dumps(doc, separators=(",", ":"), allow_nan=False) + "\n")
    return len(out)


def default_palette(k: int) -> list[str]:
    """``k`` colours sampled evenly along :data:`DEFAULT_RAMP`."""
    if k == len(DEFAULT_RAMP):
        return list(DEFAULT_RAMP)
    stops = [tuple(int(c[i : i + 2], 16) for i in (1, 3, 5)) for c in DEFAULT_RAMP]
    colours = []
    for j in range(k):
        t = j * (len(stops) - 1) / (k - 1) if k > 1 else 0.0
        i = min(int(t), len(stops) - 2)
        frac = t - i
        rgb = [round(a + (b - a) * frac) for a, b in zip(stops[i], stops[i + 1])]
        colours.append("#" + "".join(f"{v:02x}" for v in rgb))
    return colours


def _fmt(value: float) -> str:
    return f"{value:,.0f}"


def style_descriptor(breaks: Sequence[float], palette: Sequence[str]) -> dict:
    k = len(breaks) + 1
    if len(palette) != k:
        raise PaletteMismatch(f"{len(breaks)} breaks need {k} colours, got {len(palette)}")
    classes = []
    for c in range(k):
        lo = breaks[c - 1] if c > 0 else None
        hi = breaks[c] if c < k - 1 else None
        if lo is None:
            label = f"≤ {_fmt(hi)}"
        elif hi is None:
            label = f"≥ {_fmt(lo)}"
        else:
            label = f"{_fmt(lo)} to {_fmt(hi)}"
        classes.append({"class": c, "color": palette[c], "min": lo, "max": hi, "label": label})
    return {
        "property": "density_class",
        "value_property": "daytime_density",
        "units": "persons/km2",
        "no_data_color": "#cccccc",
        "classes": classes,
        "legend": {
            "title": "Daytime population density (persons/km²)",
            "rows": [{"color": c["color"], "label": c["label"]} for c in classes],
        },
    }


def emit_style(breaks: Sequence[float], palette: Sequence[str] | None, path) -> dict:
    """Write the choropleth style JSON (class → colour, plus a legend)."""
    style = style_descriptor(breaks, palette if palette is not None else default_palette(len(breaks) + 1))
    _write_text(path, json.dumps(style, indent=2, ensure_ascii=False) + "\n")
    return style


def _real(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def emit_csv(records: Iterable[DensityRecord], path) -> int:
    """Write one row per tract, GEOID ascending; reals round-trip exactly."""
    rows = sorted(records, key=lambda r: r.geoid)
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for r in rows:
                writer.writerow(
                    (
                        r.geoid, r.population, r.inbound, r.outbound, r.daytime_pop,
                        _real(r.land_area_km2), _real(r.daytime_density), _real(r.nighttime_density),
                        int(r.excluded),
                    )
                )
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return len(rows)


def read_density_csv(path) -> list[DensityRecord]:
    """Inverse of :func:`emit_csv`."""

    def real(s: str) -> float | None:
        return None if s == "" else float(s)

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_HEADER) - set(reader.fieldnames or ())
        if missing:
            raise MissingColumn(f"{path}: missing column(s) {', '.join(sorted(missing))}")
        return [
            DensityRecord(
                row["geoid"], int(row["population"]), int(row["inbound"]), int(row["outbound"]),
                float(row["land_area_km2"]), int(row["daytime_pop"]),
                real(row["daytime_density"]), real(row["nighttime_density"]), row["excluded"] == "1",
            )
            for row in reader
        ]


def _write_text(path, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write {os.fspath(path)}: {exc}") from exc
