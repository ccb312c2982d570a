"""Build cubes at several geographic levels from one record set, then slice
them: OD pairs, destination-time and origin-time matrices, choropleth
vectors, daily marginals, and the audit check.

Run:  python3 demos/02_build_cube_and_slice.py
"""

import datetime as dt
import random

from odcube import (
    Direction,
    FlowKind,
    FlowRecord,
    GeoLevel,
    GeoUnit,
    UnitRegistry,
    build_cube,
)

# A small two-state hierarchy: 45 and 37, two counties each, two block groups per county.
registry = UnitRegistry()
bgs = []
for s, base_lon in (("45", -81.0), ("37", -79.0)):
    registry.add(GeoUnit(id=s, level=GeoLevel.state, name=f"state {s}", centroid=(34.5, base_lon)))
    for i, c in enumerate(("001", "079")):
        county = s + c
        registry.add(GeoUnit(id=county, level=GeoLevel.county, name=county, centroid=(34.0 + i, base_lon)))
        for j in ("0101001", "0101002"):
            bg = county + j
            registry.add(GeoUnit(id=bg, level=GeoLevel.block_group, name=bg,
                                 centroid=(34.0 + i + 0.1 * int(j[-1]), base_lon + 0.05)))
            bgs.append(bg)

rng = random.Random(42)
start = dt.date(2020, 3, 1)
records = [
    FlowRecord(
        origin=rng.choice(bgs),
        destination=rng.choice(bgs),
        date=start + dt.timedelta(days=rng.randrange(7)),
        count=rng.randint(1, 30),
        kind=FlowKind.sdm,
    )
    for _ in range(2000)
]

print("== multi-level rollup ==")
cubes = {}
for level in (GeoLevel.block_group, GeoLevel.county, GeoLevel.state):
    cube = cubes[level] = build_cube(records, level, registry)
    report = cube.build_report
    print(f"{level.value:12s} {cube.n_triples:5d} triples, total count {cube.total_count()}, "
          f"self loops dropped {report.dropped_self_loops}")
print("(totals agree across levels; block-group self loops are zero movement and never stored)")

county = cubes[GeoLevel.county]
week = county.date_range

print("\n== OD matrix (county, whole week, count > 40) ==")
for line in county.od_matrix(week, threshold=40).lines:
    print(f"{line.origin_id} -> {line.destination_id}: {line.count}")

print("\n== destination-time slice from county 45001 ==")
for destination, per_day in county.dt_matrix("45001", week).items():
    print(f"to {destination}: {per_day}")

print("\n== choropleth around county 45079 ==")
for direction in (Direction.inflow, Direction.outflow, Direction.in_and_out):
    vector = county.choropleth("45079", week, direction)
    print(f"{direction.value:10s} {vector.values}")

print("\n== daily series for state 45 ==")
state = cubes[GeoLevel.state]
for direction in (Direction.in_and_out, Direction.intraflow):
    series = state.daily_series("45", week, direction)
    print(f"{direction.value:10s} {series.counts}")

print("\n== audit ==")
report = county.audit()
print("marginals consistent with triples:", report.ok)
