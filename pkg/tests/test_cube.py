from __future__ import annotations

import datetime as dt
import random

import numpy as np
import pytest

from odcube.cube import (
    Dataset,
    Direction,
    OdtCube,
    build_cube,
)
from odcube.errors import (
    InvalidPeriod,
    MixedDataset,
    UnknownUnit,
    UnsupportedDirection,
)
from odcube.extract import FlowKind, FlowRecord
from odcube.geo import GeoLevel, GeoPoint, GeoUnit, UnitRegistry

import oracles
from conftest import COUNTY_A, COUNTY_B, D1, D2


def sdm(o, d, date, count):
    return FlowRecord(origin=o, destination=d, date=date, count=count, kind=FlowKind.sdm)


BG_WEST = "450630103011"
BG_EAST_1 = "450790103031"
BG_EAST_2 = "450790103032"


def random_cube(seed: int, n_units=8, n_days=6, n_triples=60, diag_rate=0.2):
    """A random county-level cube plus the raw triple list and centroid map."""
    rng = random.Random(seed)
    units = {}
    for i in range(n_units):
        units[f"{10000 + i}"] = (rng.uniform(30, 40), rng.uniform(-90, -80))
    ids = sorted(units)
    start = dt.date(2020, 1, 1)
    triples = []
    for _ in range(n_triples):
        o = rng.choice(ids)
        d = o if rng.random() < diag_rate else rng.choice(ids)
        date = start + dt.timedelta(days=rng.randrange(n_days))
        triples.append((o, d, date, rng.randint(1, 50)))
    cube = OdtCube.from_triples(Dataset.safegraph, GeoLevel.county, units, triples)
    return cube, triples, units


class TestBuild:
    def test_duplicate_triples_summed(self, registry):
        records = [
            sdm(BG_WEST, BG_EAST_1, D1, 3),
            sdm(BG_WEST, BG_EAST_1, D1, 4),
            sdm(BG_EAST_1, BG_WEST, D2, 2),
        ]
        cube = build_cube(records, GeoLevel.county, registry)
        assert list(cube.iter_triples()) == [
            (COUNTY_A, COUNTY_B, D1, 7),
            (COUNTY_B, COUNTY_A, D2, 2),
        ]

    def test_empty_stream_empty_cube(self, registry):
        cube = build_cube([], GeoLevel.county, registry, dataset=Dataset.safegraph)
        assert cube.date_range is None
        assert cube.n_triples == 0
        assert cube.total_count() == 0

    def test_block_group_rollup_to_state_becomes_intraflow(self, registry):
        cube = build_cube(
            [sdm(BG_EAST_2, BG_WEST, D1, 5)], GeoLevel.state, registry
        )
        assert list(cube.iter_triples()) == [("45", "45", D1, 5)]
        series = cube.daily_series("45", (D1, D1), Direction.intraflow)
        assert series.counts == [5]

    def test_self_loops_never_enter_the_cube(self, registry):
        records = [sdm(BG_EAST_1, BG_EAST_1, D1, 9), sdm(BG_WEST, BG_EAST_1, D1, 2)]
        for level in (GeoLevel.block_group, GeoLevel.county, GeoLevel.state):
            cube = build_cube(records, level, registry)
            assert cube.total_count() == 2
            assert cube.build_report.dropped_self_loops == 1

    def test_unresolved_endpoints_dropped_and_counted(self, registry):
        records = [
            sdm(BG_WEST, "990000000001", D1, 3),  # unknown state prefix
            sdm(BG_WEST, BG_EAST_1, D1, 4),
        ]
        cube = build_cube(records, GeoLevel.county, registry)
        assert cube.total_count() == 4
        assert cube.build_report.dropped_unresolved == 1

    def test_mixed_datasets_rejected(self, registry):
        records = [
            sdm(BG_WEST, BG_EAST_1, D1, 3),
            FlowRecord(GeoPoint(34.0, -81.5), GeoPoint(34.0, -80.5), D1, 1, FlowKind.single_day),
        ]
        with pytest.raises(MixedDataset):
            build_cube(records, GeoLevel.county, registry)

    def test_event_records_resolved_by_polygon(self, registry):
        records = [
            FlowRecord(GeoPoint(34.0, -81.5), GeoPoint(34.0, -80.5), D1, 1, FlowKind.single_day),
            FlowRecord(GeoPoint(34.2, -81.2), GeoPoint(34.1, -80.2), D1, 1, FlowKind.cross_day),
            FlowRecord(GeoPoint(0.0, -160.0), GeoPoint(34.0, -80.5), D1, 1, FlowKind.single_day),
        ]
        cube = build_cube(records, GeoLevel.county, registry)
        assert cube.dataset is Dataset.twitter
        assert list(cube.iter_triples()) == [(COUNTY_A, COUNTY_B, D1, 2)]
        assert cube.build_report.dropped_unresolved == 1

    def test_rollup_conserves_mass_across_levels(self, registry):
        rng = random.Random(5)
        bgs = [BG_WEST, BG_EAST_1, BG_EAST_2]
        records = []
        for _ in range(300):
            o, d = rng.choice(bgs), rng.choice(bgs)
            records.append(sdm(o, d, D1 + dt.timedelta(days=rng.randrange(5)), rng.randint(1, 9)))
        totals = {}
        drops = {}
        for level in (GeoLevel.block_group, GeoLevel.county, GeoLevel.state):
            cube = build_cube(records, level, registry)
            totals[level] = cube.total_count()
            drops[level] = cube.build_report.dropped_self_loops
        assert len(set(totals.values())) == 1
        assert len(set(drops.values())) == 1

    def test_rebuild_from_shuffled_records_is_bit_identical(self, registry):
        rng = random.Random(17)
        bgs = [BG_WEST, BG_EAST_1, BG_EAST_2]
        records = [
            sdm(rng.choice(bgs), rng.choice(bgs), D1 + dt.timedelta(days=rng.randrange(4)), rng.randint(1, 9))
            for _ in range(200)
        ]
        baseline = build_cube(records, GeoLevel.county, registry).to_bytes()
        for seed in (1, 2, 3):
            shuffled = records[:]
            random.Random(seed).shuffle(shuffled)
            assert build_cube(shuffled, GeoLevel.county, registry).to_bytes() == baseline


class TestOdMatrix:
    def test_strict_threshold(self):
        units = {"10000": (30.0, -85.0), "10001": (31.0, -84.0), "10002": (32.0, -83.0)}
        triples = [
            ("10000", "10001", D1, 25),
            ("10000", "10002", D1, 20),
        ]
        cube = OdtCube.from_triples(Dataset.safegraph, GeoLevel.county, units, triples)
        lines = cube.od_matrix((D1, D1), threshold=20)
        assert [(l.origin_id, l.destination_id, l.count) for l in lines.lines] == [
            ("10000", "10001", 25)
        ]

    def test_zero_threshold_no_aoi_returns_every_pair(self, fixture_cube):
        lines = fixture_cube.od_matrix((D1, D2), threshold=0)
        assert [(l.origin_id, l.destination_id, l.count) for l in lines.lines] == [
            (COUNTY_A, COUNTY_B, 7)
        ]

    def test_aoi_inflow_keeps_destination_inside(self):
        cube, triples, units = random_cube(seed=23, n_units=6, n_triples=80)
        bbox = (-86.0, 30.0, -83.0, 40.0)
        got = cube.od_matrix((dt.date(2020, 1, 1), dt.date(2020, 1, 6)), aoi=bbox, direction=Direction.inflow)
        expected = oracles.od_pairs(
            triples, (dt.date(2020, 1, 1), dt.date(2020, 1, 6)), units, aoi=bbox, direction="inflow"
        )
        assert {(l.origin_id, l.destination_id): l.count for l in got.lines} == expected

    def test_intraflow_direction_rejected(self, fixture_cube):
        with pytest.raises(UnsupportedDirection):
            fixture_cube.od_matrix((D1, D2), direction=Direction.intraflow)

    def test_inverted_period_rejected(self, fixture_cube):
        with pytest.raises(InvalidPeriod):
            fixture_cube.od_matrix((D2, D1))

    def test_line_centroids_come_from_unit_table(self, fixture_cube):
        line = fixture_cube.od_matrix((D1, D2)).lines[0]
        assert line.origin_centroid == (34.0, -81.5)
        assert line.destination_centroid == (34.0, -80.5)

    def test_threshold_monotonicity(self):
        cube, _, _ = random_cube(seed=31, n_triples=120)
        period = (dt.date(2020, 1, 1), dt.date(2020, 1, 6))
        previous = None
        for threshold in (0, 5, 20, 60, 200):
            kept = {
                (l.origin_id, l.destination_id)
                for l in cube.od_matrix(period, threshold=threshold).lines
            }
            if previous is not None:
                assert kept <= previous
            previous = kept


class TestSlices:
    def test_dt_matrix_example(self, fixture_cube):
        assert fixture_cube.dt_matrix(COUNTY_A, (D1, D2)) == {COUNTY_B: [3, 4]}

    def test_dt_matrix_no_outgoing(self, fixture_cube):
        assert fixture_cube.dt_matrix(COUNTY_B, (D1, D2)) == {}

    def test_dt_matrix_period_restriction(self, fixture_cube):
        assert fixture_cube.dt_matrix(COUNTY_A, (D2, D2)) == {COUNTY_B: [4]}

    def test_ot_matrix_example(self):
        units = {"10000": (30.0, -85.0), "10001": (31.0, -84.0)}
        triples = [("10000", "10001", D1, 3), ("10001", "10000", D1, 2)]
        cube = OdtCube.from_triples(Dataset.safegraph, GeoLevel.county, units, triples)
        assert cube.ot_matrix("10000", (D1, D1)) == {"10001": [2]}

    def test_ot_matrix_no_incoming(self, fixture_cube):
        assert fixture_cube.ot_matrix(COUNTY_A, (D1, D2)) == {}

    def test_ot_equals_dt_of_transposed_cube(self):
        cube, triples, units = random_cube(seed=41, n_triples=100)
        transposed = OdtCube.from_triples(
            Dataset.safegraph, GeoLevel.county, units, [(d, o, date, c) for o, d, date, c in triples]
        )
        period = (dt.date(2020, 1, 1), dt.date(2020, 1, 6))
        for unit in list(units)[:4]:
            assert cube.ot_matrix(unit, period) == transposed.dt_matrix(unit, period)

    def test_unknown_unit_rejected(self, fixture_cube):
        with pytest.raises(UnknownUnit):
            fixture_cube.dt_matrix("99999", (D1, D2))
        with pytest.raises(UnknownUnit):
            fixture_cube.ot_matrix("99999", (D1, D2))


class TestChoropleth:
    def test_inflow_example(self, fixture_cube):
        vector = fixture_cube.choropleth(COUNTY_B, (D1, D2), Direction.inflow)
        assert vector.values == {COUNTY_A: 7}
        assert vector.selected_unit == COUNTY_B

    def test_unit_without_flows_empty(self, fixture_cube):
        assert fixture_cube.choropleth(COUNTY_A, (D1, D2), Direction.inflow).values == {}

    def test_selected_unit_never_in_vector(self):
        cube, _, units = random_cube(seed=47, n_triples=150, diag_rate=0.4)
        period = (dt.date(2020, 1, 1), dt.date(2020, 1, 6))
        for unit in units:
            for direction in (Direction.inflow, Direction.outflow, Direction.in_and_out):
                assert unit not in cube.choropleth(unit, period, direction).values

    def test_in_and_out_is_elementwise_sum(self):
        cube, _, units = random_cube(seed=53, n_triples=150)
        period = (dt.date(2020, 1, 1), dt.date(2020, 1, 6))
        for unit in units:
            inflow = cube.choropleth(unit, period, Direction.inflow).values
            outflow = cube.choropleth(unit, period, Direction.outflow).values
            combined = cube.choropleth(unit, period, Direction.in_and_out).values
            expected = {
                k: inflow.get(k, 0) + outflow.get(k, 0) for k in set(inflow) | set(outflow)
            }
            assert combined == expected

    def test_intraflow_rejected(self, fixture_cube):
        with pytest.raises(UnsupportedDirection):
            fixture_cube.choropleth(COUNTY_A, (D1, D2), Direction.intraflow)


class TestDailySeries:
    def test_outflow_example_dense(self, fixture_cube):
        series = fixture_cube.daily_series(COUNTY_A, (D1, dt.date(2020, 1, 4)), Direction.outflow)
        assert series.counts == [3, 4, 0, 0]
        assert series.days[0] == D1 and series.days[-1] == dt.date(2020, 1, 4)

    def test_intraflow_counts_distinct_finest_pairs_only(self, registry):
        records = [
            sdm(BG_EAST_1, BG_EAST_2, D1, 2),
            sdm(BG_EAST_1, BG_EAST_1, D1, 9),
        ]
        cube = build_cube(records, GeoLevel.county, registry)
        series = cube.daily_series(COUNTY_B, (D1, D1), Direction.intraflow)
        assert series.counts == [2]

    def test_in_and_out_is_pointwise_sum(self):
        cube, _, units = random_cube(seed=59, n_triples=150)
        period = (dt.date(2019, 12, 30), dt.date(2020, 1, 8))  # hangs over both ends
        for unit in units:
            inflow = cube.daily_series(unit, period, Direction.inflow).counts
            outflow = cube.daily_series(unit, period, Direction.outflow).counts
            both = cube.daily_series(unit, period, Direction.in_and_out).counts
            assert both == [i + o for i, o in zip(inflow, outflow)]

    def test_unknown_unit_rejected(self, fixture_cube):
        with pytest.raises(UnknownUnit):
            fixture_cube.daily_series("99999", (D1, D2), Direction.inflow)


class TestAudit:
    def test_fresh_cube_clean(self):
        cube, _, _ = random_cube(seed=61)
        assert cube.audit().ok

    def test_corrupted_marginal_reported_exactly(self):
        cube, _, _ = random_cube(seed=67)
        unit_index = 2
        day_index = 1
        cube.inflow[unit_index, day_index] += 5
        report = cube.audit()
        assert len(report.mismatches) == 1
        bad = report.mismatches[0]
        assert bad.marginal == "inflow"
        assert bad.unit_id == cube.unit_ids[unit_index]
        assert bad.stored == bad.recomputed + 5

    def test_empty_cube_empty_report(self, registry):
        cube = build_cube([], GeoLevel.county, registry, dataset=Dataset.safegraph)
        assert cube.audit().ok


class TestSliceOracleEquivalence:
    def test_all_slices_match_naive_full_scan(self):
        rng = random.Random(101)
        for trial in range(30):
            n_units = rng.randint(2, 20)
            n_days = rng.randint(1, 12)
            cube, triples, units = random_cube(
                seed=1000 + trial,
                n_units=n_units,
                n_days=n_days,
                n_triples=rng.randint(0, 300),
            )
            start = dt.date(2020, 1, 1) + dt.timedelta(days=rng.randint(0, n_days - 1))
            end = start + dt.timedelta(days=rng.randint(0, n_days))
            end = min(end, dt.date(2020, 1, 1) + dt.timedelta(days=n_days - 1))
            period = (start, end)
            ids = sorted(units)
            unit = rng.choice(ids)

            direction = rng.choice(["inflow", "outflow", "in_and_out"])
            threshold = rng.choice([0, 1, 10, 40])
            aoi = None
            if rng.random() < 0.5:
                aoi = (-88.0, 31.0, -82.0, 38.0)
            got = cube.od_matrix(period, aoi=aoi, direction=Direction(direction), threshold=threshold)
            expected = oracles.od_pairs(triples, period, units, aoi=aoi, direction=direction, threshold=threshold)
            assert {(l.origin_id, l.destination_id): l.count for l in got.lines} == expected

            assert cube.dt_matrix(unit, period) == oracles.dt_matrix(triples, unit, period)
            assert cube.ot_matrix(unit, period) == oracles.ot_matrix(triples, unit, period)
            assert (
                cube.choropleth(unit, period, Direction(direction)).values
                == oracles.choropleth(triples, unit, period, direction)
            )
            series_direction = rng.choice(["inflow", "outflow", "in_and_out", "intraflow"])
            assert (
                cube.daily_series(unit, period, Direction(series_direction)).counts
                == oracles.daily_series(triples, unit, period, series_direction)
            )

    def test_dt_totals_equal_outflow_plus_intraflow(self):
        cube, triples, units = random_cube(seed=71, n_triples=200, diag_rate=0.3)
        period = (dt.date(2020, 1, 2), dt.date(2020, 1, 5))
        for unit in units:
            dt_total = sum(sum(v) for v in cube.dt_matrix(unit, period).values())
            outflow = sum(cube.daily_series(unit, period, Direction.outflow).counts)
            intraflow = sum(cube.daily_series(unit, period, Direction.intraflow).counts)
            assert dt_total == outflow + intraflow

    def test_choropleth_inflow_equals_ot_sums(self):
        cube, triples, units = random_cube(seed=73, n_triples=200, diag_rate=0.3)
        period = (dt.date(2020, 1, 1), dt.date(2020, 1, 6))
        for unit in units:
            ot = cube.ot_matrix(unit, period)
            sums = {o: sum(v) for o, v in ot.items() if o != unit and sum(v) > 0}
            assert cube.choropleth(unit, period, Direction.inflow).values == sums


class TestSerialization:
    def test_write_read_write_is_bit_identical(self, tmp_path):
        cube, _, _ = random_cube(seed=79, n_triples=150, diag_rate=0.3)
        first = tmp_path / "a.odtcube"
        second = tmp_path / "b.odtcube"
        cube.write(first)
        OdtCube.read(first).write(second)
        assert first.read_bytes() == second.read_bytes()

    def test_loaded_cube_answers_identically(self, tmp_path):
        cube, triples, units = random_cube(seed=83, n_triples=150)
        path = tmp_path / "c.odtcube"
        cube.write(path)
        loaded = OdtCube.read(path)
        period = (dt.date(2020, 1, 1), dt.date(2020, 1, 6))
        unit = sorted(units)[0]
        assert loaded.dt_matrix(unit, period) == cube.dt_matrix(unit, period)
        assert (
            loaded.choropleth(unit, period, Direction.in_and_out).values
            == cube.choropleth(unit, period, Direction.in_and_out).values
        )
        assert list(loaded.iter_triples()) == list(cube.iter_triples())

    def test_coord_sums_survive_round_trip(self, registry):
        records = [sdm(BG_WEST, BG_EAST_1, D1, 3), sdm(BG_WEST, BG_EAST_2, D1, 5)]
        cube = build_cube(records, GeoLevel.county, registry)
        loaded = OdtCube.from_bytes(cube.to_bytes())
        assert loaded.coord_sums is not None
        for got, want in zip(loaded.coord_sums, cube.coord_sums):
            assert np.array_equal(got, want)

    def test_empty_cube_round_trip(self, registry):
        cube = build_cube([], GeoLevel.county, registry, dataset=Dataset.safegraph)
        blob = cube.to_bytes()
        loaded = OdtCube.from_bytes(blob)
        assert loaded.to_bytes() == blob
        assert loaded.date_range is None
