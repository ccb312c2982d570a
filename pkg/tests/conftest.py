from __future__ import annotations

import datetime as dt
import json
from pathlib import Path

import pytest

from odcube.cube import Dataset, OdtCube
from odcube.geo import GeoLevel, GeoUnit, UnitRegistry, load_geojson

D1 = dt.date(2020, 1, 1)
D2 = dt.date(2020, 1, 2)
COUNTY_A = "45063"  # west square
COUNTY_B = "45079"  # east square


def square(min_lon, min_lat, max_lon, max_lat):
    return {
        "type": "Polygon",
        "coordinates": [
            [
                [min_lon, min_lat],
                [max_lon, min_lat],
                [max_lon, max_lat],
                [min_lon, max_lat],
                [min_lon, min_lat],
            ]
        ],
    }


def fixture_geojson() -> dict:
    """Two adjacent square counties sharing the lon=-81 edge, plus their state."""
    return {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "properties": {"id": "45", "level": "state", "name": "Palmetto"},
                "geometry": square(-82.0, 33.0, -80.0, 35.0),
            },
            {
                "type": "Feature",
                "properties": {"id": COUNTY_A, "level": "county", "name": "West"},
                "geometry": square(-82.0, 33.0, -81.0, 35.0),
            },
            {
                "type": "Feature",
                "properties": {"id": COUNTY_B, "level": "county", "name": "East"},
                "geometry": square(-81.0, 33.0, -80.0, 35.0),
            },
        ],
    }


@pytest.fixture()
def registry() -> UnitRegistry:
    reg = load_geojson(fixture_geojson())
    reg.add(
        GeoUnit(id="450630103011", level=GeoLevel.block_group, name="bg-west",
                centroid=(34.1, -81.5))
    )
    reg.add(
        GeoUnit(id="450790103031", level=GeoLevel.block_group, name="bg-east-1",
                centroid=(34.2, -80.5))
    )
    reg.add(
        GeoUnit(id="450790103032", level=GeoLevel.block_group, name="bg-east-2",
                centroid=(33.8, -80.4))
    )
    return reg


@pytest.fixture()
def geojson_file(tmp_path: Path) -> Path:
    path = tmp_path / "boundaries.geojson"
    path.write_text(json.dumps(fixture_geojson()), encoding="utf-8")
    return path


@pytest.fixture()
def fixture_cube() -> OdtCube:
    """The two-county cube used across the query examples: A->B on two days."""
    units = {COUNTY_A: (34.0, -81.5), COUNTY_B: (34.0, -80.5)}
    triples = [
        (COUNTY_A, COUNTY_B, D1, 3),
        (COUNTY_A, COUNTY_B, D2, 4),
    ]
    return OdtCube.from_triples(Dataset.safegraph, GeoLevel.county, units, triples)
