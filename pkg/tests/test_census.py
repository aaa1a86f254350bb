import shutil
import zipfile

import pytest
import shapefile
from shapely.geometry import MultiPolygon, Polygon, box

from daytime_density.census import (
    BAY_AREA_COUNTIES,
    StateBoundary,
    TractRecord,
    filter_region,
    parse_state_boundary,
    parse_tracts,
)
from daytime_density.errors import DuplicateGeoid, GeometryDecode, IngestError, MissingField, StateNotFound

from oracles import read_dbf


def square(x, y, size=0.1):
    return [[(x, y), (x, y + size), (x + size, y + size), (x + size, y), (x, y)]]


def write_tracts(path, rows, fields=("GEOID10", "DP0010001", "ALAND10"), shapes=None):
    """rows: (geoid, population, aland); one unit square per row unless ``shapes`` given."""
    with shapefile.Writer(str(path), shapeType=shapefile.POLYGON) as w:
        for name in fields:
            if name == "GEOID10":
                w.field(name, "C", 11)
            else:
                w.field(name, "N", 14, 0)
        for i, row in enumerate(rows):
            if shapes is None:
                w.poly(square(-122 + i * 0.2, 37))
            else:
                shapes[i](w)
            w.record(*row[: len(fields)])
    return path.with_suffix(".shp")


def test_fixture_tracts(mini):
    tracts = parse_tracts(mini / "tracts.shp")
    assert [t.geoid for t in tracts] == ["06075011700", "06075020100", "06001400100"]
    assert [t.population for t in tracts] == [1000, 500, 2000]
    assert [t.land_area_km2 for t in tracts] == [2.0, 0.5, 4.0]
    assert all(isinstance(t.geometry, Polygon) and t.geometry.is_valid for t in tracts)


def test_count_matches_independent_dbf_dump(mini):
    rows = read_dbf(mini / "tracts.dbf")
    assert len(parse_tracts(mini / "tracts.shp")) == len(rows) == 3
    assert len(parse_tracts(mini / "tracts.shp", geoid_prefix="06075")) == sum(
        r["GEOID10"].startswith("06075") for r in rows
    )


def test_county_population_matches_dbf_sum(mini):
    sf = filter_region(parse_tracts(mini / "tracts.shp"), ["06075"])
    expected = sum(int(r["DP0010001"]) for r in read_dbf(mini / "tracts.dbf") if r["GEOID10"].startswith("06075"))
    assert sum(t.population for t in sf) == expected == 1500


def test_table_row_example(tmp_path):
    shp = write_tracts(tmp_path / "t", [("06075011700", 1783, 556_000)])
    (t,) = parse_tracts(shp)
    assert t.population == 1783
    assert t.land_area_km2 == pytest.approx(0.556, abs=1e-12)


@pytest.mark.parametrize("aland", [0, 1, 556_000, 57_123, 999_999_999_999, 2**40 + 3])
def test_land_area_round_trip(tmp_path, aland):
    (t,) = parse_tracts(write_tracts(tmp_path / "t", [("06075011700", 10, aland)]))
    assert t.land_area_m2 == aland
    assert round(t.land_area_km2 * 1_000_000) == aland


def test_zero_area_kept_and_flagged(tmp_path):
    tracts = parse_tracts(write_tracts(tmp_path / "t", [("06075011700", 10, 0), ("06075011800", 10, 5)]))
    assert [t.zero_area for t in tracts] == [True, False]
    assert tracts[0].land_area_km2 == 0


@pytest.mark.parametrize("missing", ["GEOID10", "DP0010001", "ALAND10"])
def test_missing_field(tmp_path, missing):
    fields = [f for f in ("GEOID10", "DP0010001", "ALAND10") if f != missing]
    rows = [tuple(v for f, v in zip(("GEOID10", "DP0010001", "ALAND10"), ("06075011700", 1, 1)) if f != missing)]
    with pytest.raises(MissingField, match=missing):
        parse_tracts(write_tracts(tmp_path / "t", rows, fields=fields))


def test_duplicate_geoid(tmp_path):
    with pytest.raises(DuplicateGeoid):
        parse_tracts(write_tracts(tmp_path / "t", [("06075011700", 1, 1), ("06075011700", 2, 2)]))


def test_null_shape_is_a_decode_error(tmp_path):
    shp = write_tracts(tmp_path / "t", [("06075011700", 1, 1)], shapes=[lambda w: w.null()])
    with pytest.raises(GeometryDecode):
        parse_tracts(shp)


def test_point_shapefile_rejected(tmp_path):
    with shapefile.Writer(str(tmp_path / "p"), shapeType=shapefile.POINT) as w:
        w.field("GEOID10", "C", 11)
        w.field("DP0010001", "N", 9, 0)
        w.field("ALAND10", "N", 14, 0)
        w.point(-122, 37)
        w.record("06075011700", 1, 1)
    with pytest.raises(GeometryDecode):
        parse_tracts(tmp_path / "p.shp")


def test_bowtie_is_repaired(tmp_path):
    bowtie = [[(0, 0), (0, 1), (1, 0), (1, 1), (0, 0)]]
    shp = write_tracts(tmp_path / "t", [("06075011700", 1, 1)], shapes=[lambda w: w.poly(bowtie)])
    (t,) = parse_tracts(shp)
    assert t.geometry.is_valid
    assert t.geometry.area == pytest.approx(0.5)


def test_exterior_rings_are_counterclockwise(mini):
    for t in parse_tracts(mini / "tracts.shp"):
        assert t.geometry.exterior.is_ccw


def test_polygon_with_hole(tmp_path):
    outer = [(0, 0), (0, 3), (3, 3), (3, 0), (0, 0)]
    hole = [(1, 1), (2, 1), (2, 2), (1, 2), (1, 1)]  # counter-clockwise marks a hole
    shp = write_tracts(tmp_path / "t", [("06075011700", 1, 1)], shapes=[lambda w: w.poly([outer, hole])])
    (t,) = parse_tracts(shp)
    assert t.geometry.area == pytest.approx(8.0)
    assert len(t.geometry.interiors) == 1


def test_zip_bundle_matches_directory(mini, tmp_path):
    archive = tmp_path / "tracts.zip"
    with zipfile.ZipFile(archive, "w") as zf:
        for ext in ("shp", "shx", "dbf"):
            zf.write(mini / f"tracts.{ext}", f"tracts.{ext}")
    single = tmp_path / "dir"
    single.mkdir()
    for ext in ("shp", "shx", "dbf"):
        shutil.copy(mini / f"tracts.{ext}", single)
    assert parse_tracts(archive) == parse_tracts(single) == parse_tracts(mini / "tracts.shp")


def test_missing_sidecar_file(mini, tmp_path):
    shutil.copy(mini / "tracts.shp", tmp_path)
    with pytest.raises(IngestError, match="missing"):
        parse_tracts(tmp_path / "tracts.shp")


def test_filter_region():
    tracts = [TractRecord(g, 1, 1.0, box(0, 0, 1, 1), 1_000_000) for g in
              ("06075011700", "06019000100", "06001400100", "06075020100", "32003000100")]
    bay = filter_region(tracts, BAY_AREA_COUNTIES)
    assert [t.geoid for t in bay] == ["06075011700", "06001400100", "06075020100"]
    assert filter_region(tracts, []) == []
    assert len(filter_region(tracts, {"06075"})) == 2


def test_state_boundary(mini):
    state = parse_state_boundary(mini / "states.shp", "06")
    assert isinstance(state, StateBoundary)
    assert isinstance(state.geometry, MultiPolygon)
    assert state.geometry.bounds == (-123.0, 37.0, -122.0, 38.0)
    for t in parse_tracts(mini / "tracts.shp"):
        if t.geoid != "06075020100":  # the fixture's deliberately straddling tract
            minx, miny, maxx, maxy = t.geometry.bounds
            sx0, sy0, sx1, sy1 = state.geometry.bounds
            assert sx0 <= minx and sy0 <= miny and maxx <= sx1 and maxy <= sy1


def test_state_not_found(mini):
    with pytest.raises(StateNotFound):
        parse_state_boundary(mini / "states.shp", "99")


def test_state_bundle_without_fips_field(mini):
    with pytest.raises(MissingField):
        parse_state_boundary(mini / "tracts.shp", "06")


@pytest.mark.network
def test_real_bay_area_tracts(real_inputs, tmp_path):
    ca = parse_tracts(real_inputs["tracts"], geoid_prefix="06")
    assert all(t.geoid.startswith("06") for t in ca)
    state = parse_state_boundary(real_inputs["states"], "06")
    sx0, sy0, sx1, sy1 = state.geometry.bounds
    for t in ca:
        minx, miny, maxx, maxy = t.geometry.bounds
        assert sx0 <= minx + 1e-9 and sy0 <= miny + 1e-9 and maxx <= sx1 + 1e-9 and maxy <= sy1 + 1e-9
    # San Francisco County: compare against a plain attribute-table count
    with zipfile.ZipFile(real_inputs["tracts"]) as zf:
        name = next(n for n in zf.namelist() if n.lower().endswith(".dbf"))
        dbf = tmp_path / "oracle.dbf"
        dbf.write_bytes(zf.read(name))
    rows = [r for r in read_dbf(dbf) if r["GEOID10"].startswith("06075")]
    sf = filter_region(ca, ["06075"])
    assert len(sf) == len(rows)
    assert sum(t.population for t in sf) == sum(int(r["DP0010001"]) for r in rows)
