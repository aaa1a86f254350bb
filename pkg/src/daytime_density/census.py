"""Decode census TIGER/Line shapefiles into tract records and a state outline.

A "bundle" is anything holding the ``.shp``/``.shx``/``.dbf`` triplet: a
directory, a path to the ``.shp`` itself, or a ``.zip`` archive as shipped by
the census bureau.
"""

from __future__ import annotations

import io
import logging
import zipfile
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import shapefile
import shapely
from shapely.geometry import MultiPolygon, Polygon, shape
from shapely.geometry.base import BaseGeometry
from shapely.geometry.polygon import orient

from .errors import DuplicateGeoid, GeometryDecode, IngestError, MissingField, StateNotFound

log = logging.getLogger(__name__)

GEOID_FIELD = "GEOID10"
POPULATION_FIELD = "DP0010001"
LAND_AREA_FIELD = "ALAND10"
STATE_FIELDS = ("STATE", "STATEFP", "STATEFP10", "STATEFP00")
SQ_METERS_PER_SQ_KM = 1_000_000

# Alameda, Contra Costa, Marin, Napa, San Francisco, San Mateo, Santa Clara,
# Solano, Sonoma
BAY_AREA_COUNTIES = (
    "06001", "06013", "06041", "06055", "06075", "06081", "06085", "06095", "06097",
)


@dataclass(frozen=True)
class TractRecord:
    geoid: str
    population: int
    land_area_km2: float
    geometry: BaseGeometry = field(repr=False, compare=False)
    land_area_m2: int = 0

    @property
    def zero_area(self) -> bool:
        return self.land_area_m2 == 0


@dataclass(frozen=True)
class StateBoundary:
    fips: str
    geometry: MultiPolygon = field(repr=False)


@contextmanager
def open_bundle(bundle, layer: str | None = None) -> Iterator[shapefile.Reader]:
    """Open a shapefile bundle (directory, ``.shp`` path or ``.zip``)."""
    path = Path(bundle)
    if path.suffix.lower() == ".zip":
        with zipfile.ZipFile(path) as zf:
            stem = _pick_stem([n for n in zf.namelist() if n.lower().endswith(".shp")], layer, path)
            members = {n.lower(): n for n in zf.namelist()}

            def member(ext, required=True):
                name = members.get(f"{stem}.{ext}".lower())
                if name is None:
                    if required:
                        raise IngestError(f"{path}: archive lacks {stem}.{ext}")
                    return None
                return io.BytesIO(zf.read(name))

            reader = shapefile.Reader(shp=member("shp"), shx=member("shx"), dbf=member("dbf"), encoding="latin-1")
            try:
                yield reader
            finally:
                reader.close()
        return
    if path.is_dir():
        stem = _pick_stem([str(p) for p in path.glob("*.shp")], layer, path)
    elif path.suffix.lower() == ".shp":
        stem = str(path.with_suffix(""))
    else:
        raise IngestError(f"{path}: not a directory, .shp or .zip")
    for ext in ("shp", "shx", "dbf"):
        if not Path(f"{stem}.{ext}").exists():
            raise IngestError(f"{stem}.{ext} is missing")
    try:
        reader = shapefile.Reader(stem, encoding="latin-1")
    except shapefile.ShapefileException as exc:
        raise IngestError(f"{path}: {exc}") from exc
    try:
        yield reader
    finally:
        reader.close()


def _pick_stem(shp_names: list[str], layer: str | None, where) -> str:
    if layer is not None:
        shp_names = [n for n in shp_names if Path(n).stem == layer]
    if len(shp_names) != 1:
        raise IngestError(f"{where}: expected exactly one shapefile layer, found {len(shp_names)}")
    return shp_names[0][: -len(".shp")]


def _field_index(reader: shapefile.Reader, name: str) -> int:
    names = [f[0].upper() for f in reader.fields[1:]]
    try:
        return names.index(name.upper())
    except ValueError:
        raise MissingField(f"attribute table has no {name} field") from None


def decode_geometry(shp, label: str) -> BaseGeometry:
    """Turn a pyshp polygon shape into a valid, CCW-oriented shapely geometry.

    Rings are closed and invalid input is repaired with ``make_valid``; any
    non-areal debris left over from the repair is discarded.
    """
    if shp.shapeType not in (shapefile.POLYGON, shapefile.POLYGONZ, shapefile.POLYGONM):
        raise GeometryDecode(f"{label}: expected a polygon, got {shp.shapeTypeName}")
    if not shp.points:
        raise GeometryDecode(f"{label}: empty polygon")
    try:
        geom = shape(shp.__geo_interface__)
    except (ValueError, TypeError, shapely.errors.GEOSException) as exc:
        raise GeometryDecode(f"{label}: {exc}") from exc
    if not geom.is_valid:
        geom = polygonal_part(shapely.make_valid(geom))
        if geom.is_empty:
            raise GeometryDecode(f"{label}: polygon collapses to nothing after repair")
    return normalize_orientation(geom)


def polygonal_part(geom: BaseGeometry) -> BaseGeometry:
    """Drop points and lines from a geometry collection, keeping the areas."""
    if isinstance(geom, (Polygon, MultiPolygon)):
        return geom
    polys: list[Polygon] = []
    for part in getattr(geom, "geoms", ()):
        if isinstance(part, Polygon):
            polys.append(part)
        elif isinstance(part, MultiPolygon):
            polys.extend(part.geoms)
    if not polys:
        return Polygon()
    return polys[0] if len(polys) == 1 else MultiPolygon(polys)


def normalize_orientation(geom: BaseGeometry) -> BaseGeometry:
    if isinstance(geom, Polygon):
        return orient(geom, 1.0)
    if isinstance(geom, MultiPolygon):
        return MultiPolygon([orient(p, 1.0) for p in geom.geoms])
    return geom


def _as_int(value, name: str, geoid: str) -> int:
    if value is None or value == "":
        raise MissingField(f"tract {geoid}: {name} is blank")
    if isinstance(value, float):
        if not value.is_integer():
            raise IngestError(f"tract {geoid}: {name}={value} is not a whole number")
        return int(value)
    return int(value)


def parse_tracts(
    bundle,
    geoid_prefix: str | None = None,
    *,
    geoid_field: str = GEOID_FIELD,
    population_field: str = POPULATION_FIELD,
    land_area_field: str = LAND_AREA_FIELD,
) -> list[TractRecord]:
    """Read every tract in a DP1 shapefile bundle.

    ``geoid_prefix`` (e.g. a state FIPS code) skips non-matching records
    before their geometry is decoded, which matters for the national file.
    ``land_area_km2`` is the ``ALAND10`` attribute in m² divided by 10⁶.
    """
    tracts: list[TractRecord] = []
    seen: set[str] = set()
    with open_bundle(bundle) as reader:
        gi = _field_index(reader, geoid_field)
        pi = _field_index(reader, population_field)
        ai = _field_index(reader, land_area_field)
        if reader.shapeType not in (shapefile.POLYGON, shapefile.POLYGONZ, shapefile.POLYGONM):
            raise GeometryDecode(f"{bundle}: shapefile holds {reader.shapeTypeName}, not polygons")
        for i, rec in enumerate(reader.iterRecords()):
            geoid = str(rec[gi]).strip()
            if geoid_prefix and not geoid.startswith(geoid_prefix):
                continue
            if len(geoid) != 11 or not geoid.isdigit():
                raise IngestError(f"record {i}: {geoid_field}={geoid!r} is not an 11-digit tract code")
            if geoid in seen:
                raise DuplicateGeoid(f"tract {geoid} appears more than once")
            seen.add(geoid)
            population = _as_int(rec[pi], population_field, geoid)
            aland = _as_int(rec[ai], land_area_field, geoid)
            if population < 0 or aland < 0:
                raise IngestError(f"tract {geoid}: negative population or land area")
            try:
                shp = reader.shape(i)
            except Exception as exc:  # pyshp raises bare struct/Shapefile errors
                raise GeometryDecode(f"tract {geoid}: {exc}") from exc
            geometry = decode_geometry(shp, f"tract {geoid}")
            if aland == 0:
                log.info("tract %s has zero land area; it will be excluded from density statistics", geoid)
            tracts.append(TractRecord(geoid, population, aland / SQ_METERS_PER_SQ_KM, geometry, aland))
    return tracts


def filter_region(tracts: Iterable[TractRecord], county_fips: Iterable[str]) -> list[TractRecord]:
    """Keep tracts whose 5-digit state+county prefix is in ``county_fips``."""
    counties = set(county_fips)
    return [t for t in tracts if t.geoid[:5] in counties]


def parse_state_boundary(bundle, fips: str) -> StateBoundary:
    """Return the outline of the state with FIPS code ``fips``."""
    polys: list[Polygon] = []
    with open_bundle(bundle) as reader:
        names = [f[0].upper() for f in reader.fields[1:]]
        candidates = [n for n in STATE_FIELDS if n in names]
        if not candidates:
            raise MissingField(f"{bundle}: no state FIPS field (looked for {', '.join(STATE_FIELDS)})")
        si = names.index(candidates[0])
        for i, rec in enumerate(reader.iterRecords()):
            if str(rec[si]).strip().zfill(2) != fips:
                continue
            geom = decode_geometry(reader.shape(i), f"state {fips}")
            polys.extend(geom.geoms if isinstance(geom, MultiPolygon) else [geom])
    if not polys:
        raise StateNotFound(f"no state with FIPS {fips!r} in {bundle}")
    geometry = MultiPolygon(polys)
    if not geometry.is_valid:
        geometry = normalize_orientation(polygonal_part(shapely.make_valid(geometry)))
        if isinstance(geometry, Polygon):
            geometry = MultiPolygon([geometry])
    return StateBoundary(fips, geometry)
