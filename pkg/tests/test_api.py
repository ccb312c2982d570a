from __future__ import annotations

import csv
import datetime as dt
import io
import json
import random

import pytest
from fastapi.testclient import TestClient

from odcube.api import CubeStore, ServiceConfig, create_app
from odcube.cube import DAILY_EXPORT_HEADER, Dataset, Direction, OdtCube, build_cube
from odcube.extract import FlowKind, FlowRecord
from odcube.geo import GeoLevel, GeoUnit, UnitRegistry

import oracles
from test_cube import BG_EAST_1, BG_EAST_2, BG_WEST, random_cube, sdm
from conftest import COUNTY_A, COUNTY_B, D1, D2


def client_for(*cubes: OdtCube, config: ServiceConfig | None = None) -> TestClient:
    store = CubeStore({(c.dataset, c.level): c for c in cubes})
    return TestClient(create_app(store, config or ServiceConfig()))


@pytest.fixture()
def client(fixture_cube) -> TestClient:
    return client_for(fixture_cube)


class TestMeta:
    def test_lists_cubes_with_date_ranges(self, fixture_cube):
        twitter = OdtCube.from_triples(
            Dataset.twitter, GeoLevel.state, {"45": (34.0, -81.0)}, [("45", "45", D1, 2)]
        )
        client = client_for(fixture_cube, twitter)
        body = client.get("/api/v1/meta").json()
        assert body == {
            "datasets": [
                {
                    "name": "safegraph",
                    "levels": [{"level": "county", "start": "2020-01-01", "end": "2020-01-02"}],
                },
                {
                    "name": "twitter",
                    "levels": [{"level": "state", "start": "2020-01-01", "end": "2020-01-01"}],
                },
            ]
        }

    def test_empty_store_returns_empty_list(self):
        client = client_for()
        response = client.get("/api/v1/meta")
        assert response.status_code == 200
        assert response.json() == {"datasets": []}

    def test_single_level_listed_exactly(self, client):
        body = client.get("/api/v1/meta").json()
        assert [lv["level"] for lv in body["datasets"][0]["levels"]] == ["county"]


class TestChoropleth:
    def test_fixture_inflow(self, client):
        response = client.get(
            "/api/v1/choropleth",
            params={
                "dataset": "safegraph",
                "level": "county",
                "unit": COUNTY_B,
                "start": "2020-01-01",
                "end": "2020-01-02",
                "direction": "inflow",
            },
        )
        assert response.status_code == 200
        assert response.json() == {COUNTY_A: 7}

    def test_intraflow_is_bad_request(self, client):
        response = client.get(
            "/api/v1/choropleth",
            params={
                "dataset": "safegraph",
                "level": "county",
                "unit": COUNTY_B,
                "start": "2020-01-01",
                "end": "2020-01-02",
                "direction": "intraflow",
            },
        )
        assert response.status_code == 400

    def test_unknown_dataset_404(self, client):
        response = client.get(
            "/api/v1/choropleth",
            params={
                "dataset": "mystery",
                "level": "county",
                "unit": COUNTY_B,
                "start": "2020-01-01",
                "end": "2020-01-02",
                "direction": "inflow",
            },
        )
        assert response.status_code == 404

    def test_unknown_unit_404(self, client):
        response = client.get(
            "/api/v1/choropleth",
            params={
                "dataset": "safegraph",
                "level": "county",
                "unit": "99999",
                "start": "2020-01-01",
                "end": "2020-01-02",
                "direction": "inflow",
            },
        )
        assert response.status_code == 404

    def test_bad_date_and_inverted_period_400(self, client):
        base = {
            "dataset": "safegraph",
            "level": "county",
            "unit": COUNTY_B,
            "direction": "inflow",
        }
        assert (
            client.get(
                "/api/v1/choropleth", params={**base, "start": "soon", "end": "2020-01-02"}
            ).status_code
            == 400
        )
        assert (
            client.get(
                "/api/v1/choropleth", params={**base, "start": "2020-01-05", "end": "2020-01-02"}
            ).status_code
            == 400
        )


class TestFlows:
    def test_strict_min_count(self):
        units = {"10000": (30.0, -85.0), "10001": (31.0, -84.0), "10002": (32.0, -83.0)}
        cube = OdtCube.from_triples(
            Dataset.safegraph,
            GeoLevel.county,
            units,
            [("10000", "10001", D1, 25), ("10000", "10002", D1, 20)],
        )
        client = client_for(cube)
        body = client.get(
            "/api/v1/flows",
            params={
                "dataset": "safegraph",
                "level": "county",
                "start": "2020-01-01",
                "end": "2020-01-01",
                "direction": "in_and_out",
                "min_count": "20",
            },
        ).json()
        assert [(line["origin"], line["destination"], line["count"]) for line in body] == [
            ("10000", "10001", 25)
        ]

    def test_no_bbox_zero_min_count_returns_all(self, client):
        body = client.get(
            "/api/v1/flows",
            params={
                "dataset": "safegraph",
                "level": "county",
                "start": "2020-01-01",
                "end": "2020-01-02",
                "direction": "in_and_out",
                "min_count": "0",
            },
        ).json()
        assert body == [
            {
                "origin": COUNTY_A,
                "origin_lat": 34.0,
                "origin_lon": -81.5,
                "destination": COUNTY_B,
                "destination_lat": 34.0,
                "destination_lon": -80.5,
                "count": 7,
            }
        ]

    def test_bbox_excluding_all_centroids_is_empty_200(self, client):
        response = client.get(
            "/api/v1/flows",
            params={
                "dataset": "safegraph",
                "level": "county",
                "start": "2020-01-01",
                "end": "2020-01-02",
                "direction": "in_and_out",
                "bbox": "0,0,1,1",
                "min_count": "0",
            },
        )
        assert response.status_code == 200
        assert response.json() == []

    def test_default_threshold_per_dataset(self, fixture_cube):
        # safegraph default is 20: the 7-count fixture pair disappears without min_count
        client = client_for(fixture_cube)
        body = client.get(
            "/api/v1/flows",
            params={
                "dataset": "safegraph",
                "level": "county",
                "start": "2020-01-01",
                "end": "2020-01-02",
                "direction": "in_and_out",
            },
        ).json()
        assert body == []

    def test_intraflow_direction_400(self, client):
        response = client.get(
            "/api/v1/flows",
            params={
                "dataset": "safegraph",
                "level": "county",
                "start": "2020-01-01",
                "end": "2020-01-02",
                "direction": "intraflow",
            },
        )
        assert response.status_code == 400

    def test_malformed_bbox_400(self, client):
        for bad in ("1,2,3", "a,b,c,d", "2,0,1,1", "0,2,1,1"):
            response = client.get(
                "/api/v1/flows",
                params={
                    "dataset": "safegraph",
                    "level": "county",
                    "start": "2020-01-01",
                    "end": "2020-01-02",
                    "direction": "inflow",
                    "bbox": bad,
                },
            )
            assert response.status_code == 400, bad


class TestTimeseries:
    def test_dense_daily_series(self, client):
        body = client.get(
            "/api/v1/timeseries",
            params={
                "dataset": "safegraph",
                "level": "county",
                "unit": COUNTY_A,
                "start": "2020-01-01",
                "end": "2020-01-04",
                "direction": "outflow",
            },
        ).json()
        assert body == [
            {"date": "2020-01-01", "count": 3},
            {"date": "2020-01-02", "count": 4},
            {"date": "2020-01-03", "count": 0},
            {"date": "2020-01-04", "count": 0},
        ]

    def test_intraflow_same_parent_distinct_finest(self, registry):
        cube = build_cube(
            [sdm(BG_EAST_1, BG_EAST_2, D1, 2), sdm(BG_EAST_1, BG_EAST_1, D1, 9)],
            GeoLevel.county,
            registry,
        )
        client = client_for(cube)
        body = client.get(
            "/api/v1/timeseries",
            params={
                "dataset": "safegraph",
                "level": "county",
                "unit": COUNTY_B,
                "start": "2020-01-01",
                "end": "2020-01-01",
                "direction": "intraflow",
            },
        ).json()
        assert body == [{"date": "2020-01-01", "count": 2}]

    def test_unit_without_data_all_zero(self, client):
        body = client.get(
            "/api/v1/timeseries",
            params={
                "dataset": "safegraph",
                "level": "county",
                "unit": COUNTY_B,
                "start": "2020-01-05",
                "end": "2020-01-07",
                "direction": "outflow",
            },
        ).json()
        assert [point["count"] for point in body] == [0, 0, 0]


class TestExport:
    def export_params(self, **extra):
        return {
            "dataset": "safegraph",
            "level": "county",
            "start": "2020-01-01",
            "end": "2020-01-02",
            **extra,
        }

    def test_daily_header_verbatim(self, client):
        text = client.get("/api/v1/export", params=self.export_params()).text
        assert text.splitlines()[0] == DAILY_EXPORT_HEADER
        assert DAILY_EXPORT_HEADER == "o_fips,d_fips,year,month,day,cnt,o_lat,o_lon,d_lat,d_lon"

    def test_daily_rows_format(self):
        units = {COUNTY_A: (34.1, -81.5), COUNTY_B: (33.9, -80.5)}
        cube = OdtCube.from_triples(
            Dataset.safegraph, GeoLevel.county, units,
            [(COUNTY_B, COUNTY_A, dt.date(2020, 3, 14), 5)],
        )
        client = client_for(cube)
        text = client.get(
            "/api/v1/export",
            params={"dataset": "safegraph", "level": "county", "start": "2020-03-14", "end": "2020-03-14"},
        ).text
        assert text.splitlines()[1] == "45079,45063,2020,3,14,5,33.900000,-80.500000,34.100000,-81.500000"

    def test_aggregated_sums_over_period(self, client):
        text = client.get("/api/v1/export", params=self.export_params(aggregated="true")).text
        lines = text.splitlines()
        assert lines[0] == "o_fips,d_fips,cnt,o_lat,o_lon,d_lat,d_lon"
        assert lines[1:] == [f"{COUNTY_A},{COUNTY_B},7,34.000000,-81.500000,34.000000,-80.500000"]

    def test_row_count_equals_admitted_cells(self, registry):
        rng = random.Random(2)
        bgs = [BG_WEST, BG_EAST_1, BG_EAST_2]
        records = [
            sdm(rng.choice(bgs), rng.choice(bgs), D1 + dt.timedelta(days=rng.randrange(3)), rng.randint(1, 9))
            for _ in range(120)
        ]
        cube = build_cube(records, GeoLevel.county, registry)
        client = client_for(cube)
        text = client.get(
            "/api/v1/export",
            params={"dataset": "safegraph", "level": "county", "start": "2020-01-01", "end": "2020-01-03"},
        ).text
        n_rows = len(text.splitlines()) - 1
        assert n_rows == cube.export_row_count((D1, dt.date(2020, 1, 3)), None, False)
        assert n_rows == cube.n_triples

    def test_bbox_keeps_pairs_touching_it(self, registry):
        cube = build_cube(
            [sdm(BG_WEST, BG_EAST_1, D1, 3), sdm(BG_EAST_1, BG_EAST_2, D1, 4)],
            GeoLevel.county,
            registry,
        )
        client = client_for(cube)
        # bbox around county A's centroid only: keeps A->B (origin inside), drops B->B
        text = client.get(
            "/api/v1/export",
            params={
                "dataset": "safegraph",
                "level": "county",
                "start": "2020-01-01",
                "end": "2020-01-01",
                "bbox": "-82,33,-81,35",
            },
        ).text
        rows = text.splitlines()[1:]
        assert len(rows) == 1 and rows[0].startswith(f"{COUNTY_A},{COUNTY_B},")

    def test_round_trip_rebuild_has_identical_triples(self, client, fixture_cube):
        text = client.get("/api/v1/export", params=self.export_params()).text
        records = []
        for row in csv.DictReader(io.StringIO(text)):
            records.append(
                FlowRecord(
                    origin=row["o_fips"],
                    destination=row["d_fips"],
                    date=dt.date(int(row["year"]), int(row["month"]), int(row["day"])),
                    count=int(row["cnt"]),
                    kind=FlowKind.sdm,
                )
            )
        registry = UnitRegistry()
        for unit_id in fixture_cube.unit_ids:
            lat, lon = fixture_cube.unit_centroid(unit_id)
            registry.add(GeoUnit(id=unit_id, level=GeoLevel.county, name=unit_id, centroid=(lat, lon)))
        rebuilt = build_cube(records, GeoLevel.county, registry, dataset=Dataset.safegraph)
        assert list(rebuilt.iter_triples()) == list(fixture_cube.iter_triples())

    def test_row_cap_gives_413_with_guidance(self, fixture_cube):
        client = client_for(fixture_cube, config=ServiceConfig(row_cap=1))
        response = client.get("/api/v1/export", params=self.export_params())
        assert response.status_code == 413
        assert "cap" in response.json()["detail"]

    def test_unknown_level_404(self, client):
        response = client.get("/api/v1/export", params=self.export_params(level="galaxy"))
        assert response.status_code == 404


class TestDeterminismAndFidelity:
    def test_repeated_queries_byte_identical(self, client):
        params = {
            "dataset": "safegraph",
            "level": "county",
            "unit": COUNTY_B,
            "start": "2020-01-01",
            "end": "2020-01-02",
            "direction": "inflow",
        }
        first = client.get("/api/v1/choropleth", params=params).content
        second = client.get("/api/v1/choropleth", params=params).content
        assert first == second
        export_params = {
            "dataset": "safegraph",
            "level": "county",
            "start": "2020-01-01",
            "end": "2020-01-02",
        }
        assert (
            client.get("/api/v1/export", params=export_params).content
            == client.get("/api/v1/export", params=export_params).content
        )

    def test_http_layer_adds_no_arithmetic(self):
        rng = random.Random(6)
        cube, triples, units = random_cube(seed=301, n_units=10, n_days=8, n_triples=200)
        client = client_for(cube)
        ids = sorted(units)
        start0 = dt.date(2020, 1, 1)
        for _ in range(25):
            a = start0 + dt.timedelta(days=rng.randrange(8))
            b = a + dt.timedelta(days=rng.randrange(0, 8 - (a - start0).days))
            unit = rng.choice(ids)
            direction = rng.choice(["inflow", "outflow", "in_and_out"])
            body = client.get(
                "/api/v1/choropleth",
                params={
                    "dataset": "safegraph",
                    "level": "county",
                    "unit": unit,
                    "start": a.isoformat(),
                    "end": b.isoformat(),
                    "direction": direction,
                },
            ).json()
            assert body == cube.choropleth(unit, (a, b), Direction(direction)).values

            series_direction = rng.choice(["inflow", "outflow", "in_and_out", "intraflow"])
            body = client.get(
                "/api/v1/timeseries",
                params={
                    "dataset": "safegraph",
                    "level": "county",
                    "unit": unit,
                    "start": a.isoformat(),
                    "end": b.isoformat(),
                    "direction": series_direction,
                },
            ).json()
            assert [p["count"] for p in body] == cube.daily_series(
                unit, (a, b), Direction(series_direction)
            ).counts

            threshold = rng.choice([0, 10, 50])
            body = client.get(
                "/api/v1/flows",
                params={
                    "dataset": "safegraph",
                    "level": "county",
                    "start": a.isoformat(),
                    "end": b.isoformat(),
                    "direction": direction,
                    "min_count": str(threshold),
                },
            ).json()
            direct = cube.od_matrix((a, b), direction=Direction(direction), threshold=threshold)
            assert [(l["origin"], l["destination"], l["count"]) for l in body] == [
                (l.origin_id, l.destination_id, l.count) for l in direct.lines
            ]

    def test_cors_header_present(self, client):
        response = client.get("/api/v1/meta", headers={"Origin": "http://localhost:5173"})
        assert response.headers.get("access-control-allow-origin") == "*"


class TestBoundaries:
    def test_served_verbatim_when_loaded(self, fixture_cube):
        from conftest import fixture_geojson

        blob = json.dumps(fixture_geojson()).encode()
        store = CubeStore({(fixture_cube.dataset, fixture_cube.level): fixture_cube})
        client = TestClient(create_app(store, ServiceConfig(), boundaries=blob))
        response = client.get("/api/v1/boundaries")
        assert response.status_code == 200
        assert response.content == blob

    def test_404_without_boundary_file(self, client):
        assert client.get("/api/v1/boundaries").status_code == 404


class TestServiceConfig:
    def test_precedence_file_env_flags(self, tmp_path):
        config_path = tmp_path / "config.json"
        config_path.write_text(
            json.dumps({"port": 1111, "row_cap": 10, "min_counts": {"twitter": 5}})
        )
        cfg = ServiceConfig.load(
            config_file=config_path,
            env={
                "ODCUBE_PORT": "2222",
                "ODCUBE_MIN_COUNT_SAFEGRAPH": "99",
                "ODCUBE_DATA_DIR": str(tmp_path),
            },
            port=3333,
        )
        assert cfg.port == 3333  # flag beats env beats file
        assert cfg.row_cap == 10
        assert cfg.min_counts[Dataset.twitter] == 5
        assert cfg.min_counts[Dataset.safegraph] == 99
        assert cfg.data_dir == tmp_path

    def test_defaults(self):
        cfg = ServiceConfig.load(env={})
        assert cfg.row_cap == 5_000_000
        assert cfg.min_counts == {Dataset.twitter: 0, Dataset.safegraph: 20}


class TestStoreSwap:
    def test_swap_changes_subsequent_responses(self, fixture_cube):
        store = CubeStore({(fixture_cube.dataset, fixture_cube.level): fixture_cube})
        client = TestClient(create_app(store, ServiceConfig()))
        assert len(client.get("/api/v1/meta").json()["datasets"]) == 1
        store.swap({})
        assert client.get("/api/v1/meta").json() == {"datasets": []}
