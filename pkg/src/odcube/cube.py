"""The origin-destination-time cube.

A cube holds one dataset at one geographic level: day-partitioned sparse
triples (origin, destination, count) sorted by (day, origin, destination)
with a secondary destination-sorted view, plus precomputed per-(unit, day)
inflow / outflow / intraflow marginals so time-series reads cost O(period)
rather than a scan.  Built cubes are immutable and safe to share across
readers.

Intraflow at level L means: the finest-granularity endpoints of a record
differ but share the same L-level unit.  Device-panel self loops (identical
block-group endpoints) carry zero movement and never enter the cube, which
keeps every (u, u) triple pure intraflow mass and makes the marginals
recomputable from the triples alone.
"""

from __future__ import annotations

import datetime as dt
import io
import json
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .errors import (
    InvalidInput,
    InvalidPeriod,
    MixedDataset,
    UnknownUnit,
    UnsupportedDirection,
)
from .extract import FlowKind, FlowRecord
from .geo import GeoLevel, UnitRegistry

Period = tuple[dt.date, dt.date]
Bbox = tuple[float, float, float, float]  # min_lon, min_lat, max_lon, max_lat

_MAGIC = b"ODCUBE01"
_FORMAT_VERSION = 1

# o*n_units+d bincount is used while the dense pair space stays affordable.
_PAIR_BINCOUNT_CAP = 1 << 26

_FIPS_LEVEL_BY_LENGTH = {2: GeoLevel.state, 5: GeoLevel.county, 11: GeoLevel.tract, 12: GeoLevel.block_group}

DAILY_EXPORT_HEADER = "o_fips,d_fips,year,month,day,cnt,o_lat,o_lon,d_lat,d_lon"
AGGREGATED_EXPORT_HEADER = "o_fips,d_fips,cnt,o_lat,o_lon,d_lat,d_lon"


class Dataset(str, Enum):
    twitter = "twitter"
    safegraph = "safegraph"


class Direction(str, Enum):
    inflow = "inflow"
    outflow = "outflow"
    in_and_out = "in_and_out"
    intraflow = "intraflow"


@dataclass(frozen=True)
class ChoroplethVector:
    """Aggregated movement between a selected unit and every other unit."""

    values: dict[str, int]
    selected_unit: str
    direction: Direction
    period: Period


@dataclass(frozen=True)
class FlowLine:
    origin_id: str
    origin_centroid: tuple[float, float]
    destination_id: str
    destination_centroid: tuple[float, float]
    count: int


@dataclass(frozen=True)
class FlowLineSet:
    lines: list[FlowLine]
    threshold: int

    def __len__(self) -> int:
        return len(self.lines)


@dataclass(frozen=True)
class TimeSeries:
    """Daily counts, dense over the requested period (missing days are 0)."""

    unit_id: str
    direction: Direction
    days: list[dt.date]
    counts: list[int]


@dataclass
class BuildReport:
    records_in: int = 0
    records_kept: int = 0
    dropped_unresolved: int = 0
    dropped_self_loops: int = 0

    def as_dict(self) -> dict[str, int]:
        return {
            "records_in": self.records_in,
            "records_kept": self.records_kept,
            "dropped_unresolved": self.dropped_unresolved,
            "dropped_self_loops": self.dropped_self_loops,
        }


@dataclass(frozen=True)
class AuditMismatch:
    unit_id: str
    date: dt.date
    marginal: str
    stored: int
    recomputed: int


@dataclass(frozen=True)
class AuditReport:
    mismatches: list[AuditMismatch]

    @property
    def ok(self) -> bool:
        return not self.mismatches


def check_period(period: Period) -> Period:
    start, end = period
    if start > end:
        raise InvalidPeriod(f"period end {end} before start {start}")
    return period


def check_bbox(bbox: Bbox) -> Bbox:
    min_lon, min_lat, max_lon, max_lat = bbox
    if min_lon > max_lon or min_lat > max_lat:
        raise InvalidInput(f"bbox not well-ordered: {bbox}")
    return bbox


def _bbox_mask(bbox: Bbox, lat: np.ndarray, lon: np.ndarray) -> np.ndarray:
    min_lon, min_lat, max_lon, max_lat = bbox
    return (lon >= min_lon) & (lon <= max_lon) & (lat >= min_lat) & (lat <= max_lat)


def _joined_chunks(rows: Iterator[str], chunk_rows: int) -> Iterator[str]:
    chunk: list[str] = []
    for row in rows:
        chunk.append(row)
        if len(chunk) >= chunk_rows:
            yield "\n".join(chunk) + "\n"
            chunk = []
    if chunk:
        yield "\n".join(chunk) + "\n"


def _compute_marginals(
    day: np.ndarray, o: np.ndarray, d: np.ndarray, cnt: np.ndarray, n_units: int, n_days: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(inflow, outflow, intraflow) as (n_units, n_days) int64 arrays."""
    size = n_units * n_days
    if len(day) == 0 or size == 0:
        zeros = np.zeros((n_units, n_days), dtype=np.int64)
        return zeros, zeros.copy(), zeros.copy()
    cross = o != d
    day64 = day.astype(np.int64)
    o64 = o.astype(np.int64)
    d64 = d.astype(np.int64)
    # bincount weights are float64; exact for totals below 2**53
    inflow = np.bincount(
        d64[cross] * n_days + day64[cross], weights=cnt[cross], minlength=size
    )
    outflow = np.bincount(
        o64[cross] * n_days + day64[cross], weights=cnt[cross], minlength=size
    )
    diag = ~cross
    intraflow = np.bincount(
        o64[diag] * n_days + day64[diag], weights=cnt[diag], minlength=size
    )
    shape = (n_units, n_days)
    return (
        inflow.astype(np.int64).reshape(shape),
        outflow.astype(np.int64).reshape(shape),
        intraflow.astype(np.int64).reshape(shape),
    )


class OdtCube:
    """Per-(dataset, level) sparse origin-destination-time store."""

    def __init__(
        self,
        dataset: Dataset,
        level: GeoLevel,
        unit_ids: Sequence[str],
        centroid_lat: np.ndarray,
        centroid_lon: np.ndarray,
        first_day: Optional[dt.date],
        n_days: int,
        day_offsets: np.ndarray,
        o_idx: np.ndarray,
        d_idx: np.ndarray,
        cnt: np.ndarray,
        coord_sums: Optional[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = None,
        marginals: Optional[tuple[np.ndarray, np.ndarray, np.ndarray]] = None,
        build_report: Optional[BuildReport] = None,
    ) -> None:
        self.dataset = Dataset(dataset)
        self.level = GeoLevel(level)
        self.unit_ids: list[str] = list(unit_ids)
        self.centroid_lat = np.ascontiguousarray(centroid_lat, dtype=np.float64)
        self.centroid_lon = np.ascontiguousarray(centroid_lon, dtype=np.float64)
        self.first_day = first_day
        self.n_days = int(n_days)
        self.day_offsets = np.ascontiguousarray(day_offsets, dtype=np.int64)
        self.o_idx = np.ascontiguousarray(o_idx, dtype=np.int32)
        self.d_idx = np.ascontiguousarray(d_idx, dtype=np.int32)
        self.cnt = np.ascontiguousarray(cnt, dtype=np.int64)
        self.coord_sums = None
        if coord_sums is not None:
            self.coord_sums = tuple(np.ascontiguousarray(a, dtype=np.float64) for a in coord_sums)
        self.build_report = build_report

        if marginals is None:
            day_of = self._day_of_triple()
            marginals = _compute_marginals(
                day_of, self.o_idx, self.d_idx, self.cnt, len(self.unit_ids), self.n_days
            )
        self.inflow, self.outflow, self.intraflow = marginals

        self._index = {u: i for i, u in enumerate(self.unit_ids)}
        # Secondary index: within each day block, triples ordered by (destination, origin).
        day_of = self._day_of_triple()
        perm = np.lexsort((self.o_idx, self.d_idx, day_of))
        self._dest_o = self.o_idx[perm]
        self._dest_d = self.d_idx[perm]
        self._dest_cnt = self.cnt[perm]

    # -- construction ------------------------------------------------------

    @classmethod
    def from_arrays(
        cls,
        dataset: Dataset,
        level: GeoLevel,
        unit_ids: Sequence[str],
        centroid_lat: np.ndarray,
        centroid_lon: np.ndarray,
        first_day: Optional[dt.date],
        n_days: int,
        day: np.ndarray,
        o_idx: np.ndarray,
        d_idx: np.ndarray,
        cnt: np.ndarray,
        coord_sums: Optional[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = None,
        build_report: Optional[BuildReport] = None,
    ) -> "OdtCube":
        """Canonicalize raw triple arrays (any order, duplicates summed) into a cube."""
        day = np.asarray(day, dtype=np.int32)
        o_idx = np.asarray(o_idx, dtype=np.int32)
        d_idx = np.asarray(d_idx, dtype=np.int32)
        cnt = np.asarray(cnt, dtype=np.int64)
        coords = None
        if coord_sums is not None:
            coords = [np.asarray(a, dtype=np.float64) for a in coord_sums]

        n = len(day)
        if n == 0:
            day_offsets = np.zeros(n_days + 1, dtype=np.int64)
            return cls(
                dataset, level, unit_ids, centroid_lat, centroid_lon,
                first_day if n_days else None, n_days, day_offsets,
                np.empty(0, np.int32), np.empty(0, np.int32), np.empty(0, np.int64),
                coord_sums=tuple(np.empty(0, np.float64) for _ in range(4)) if coords is not None else None,
                build_report=build_report,
            )

        # Sorting also by the value fields makes the float summation order a
        # pure function of the record multiset, so shuffled inputs rebuild
        # bit-identically despite non-associative float addition.
        if coords is not None:
            order = np.lexsort((*reversed(coords), cnt, d_idx, o_idx, day))
        else:
            order = np.lexsort((cnt, d_idx, o_idx, day))
        day, o_idx, d_idx, cnt = day[order], o_idx[order], d_idx[order], cnt[order]
        if coords is not None:
            coords = [a[order] for a in coords]

        change = np.empty(n, dtype=bool)
        change[0] = True
        change[1:] = (day[1:] != day[:-1]) | (o_idx[1:] != o_idx[:-1]) | (d_idx[1:] != d_idx[:-1])
        starts = np.flatnonzero(change)
        day_u, o_u, d_u = day[starts], o_idx[starts], d_idx[starts]
        cnt_u = np.add.reduceat(cnt, starts)
        coords_u = None
        if coords is not None:
            coords_u = tuple(np.add.reduceat(a, starts) for a in coords)

        day_offsets = np.searchsorted(day_u, np.arange(n_days + 1), side="left").astype(np.int64)
        return cls(
            dataset, level, unit_ids, centroid_lat, centroid_lon, first_day, n_days,
            day_offsets, o_u, d_u, cnt_u, coord_sums=coords_u, build_report=build_report,
        )

    @classmethod
    def from_triples(
        cls,
        dataset: Dataset,
        level: GeoLevel,
        units: dict[str, tuple[float, float]],
        triples: Iterable[tuple[str, str, dt.date, int]],
    ) -> "OdtCube":
        """Build directly from (origin_id, destination_id, date, count) tuples.

        Duplicates are summed.  Diagonal triples are taken to be intraflow
        mass, matching what record-level builds produce.
        """
        unit_ids = sorted(units)
        index = {u: i for i, u in enumerate(unit_ids)}
        lat = np.array([units[u][0] for u in unit_ids], dtype=np.float64)
        lon = np.array([units[u][1] for u in unit_ids], dtype=np.float64)
        triples = list(triples)
        if not triples:
            return cls.from_arrays(
                dataset, level, unit_ids, lat, lon, None, 0,
                np.empty(0, np.int32), np.empty(0, np.int32), np.empty(0, np.int32), np.empty(0, np.int64),
            )
        dates = [t[2] for t in triples]
        first_day, last_day = min(dates), max(dates)
        n_days = (last_day - first_day).days + 1
        day = np.array([(t[2] - first_day).days for t in triples], dtype=np.int32)
        try:
            o_idx = np.array([index[t[0]] for t in triples], dtype=np.int32)
            d_idx = np.array([index[t[1]] for t in triples], dtype=np.int32)
        except KeyError as exc:
            raise UnknownUnit(f"triple references unregistered unit {exc.args[0]!r}") from None
        cnt = np.array([t[3] for t in triples], dtype=np.int64)
        return cls.from_arrays(
            dataset, level, unit_ids, lat, lon, first_day, n_days, day, o_idx, d_idx, cnt
        )

    # -- basic accessors ----------------------------------------------------

    @property
    def date_range(self) -> Optional[Period]:
        if self.first_day is None or self.n_days == 0:
            return None
        return (self.first_day, self.first_day + dt.timedelta(days=self.n_days - 1))

    @property
    def n_triples(self) -> int:
        return len(self.cnt)

    def total_count(self) -> int:
        return int(self.cnt.sum())

    def has_unit(self, unit_id: str) -> bool:
        return unit_id in self._index

    def unit_centroid(self, unit_id: str) -> tuple[float, float]:
        i = self._unit_index(unit_id)
        return (float(self.centroid_lat[i]), float(self.centroid_lon[i]))

    def iter_triples(self) -> Iterator[tuple[str, str, dt.date, int]]:
        """Canonically ordered (origin_id, destination_id, date, count)."""
        day_of = self._day_of_triple()
        for k in range(self.n_triples):
            yield (
                self.unit_ids[self.o_idx[k]],
                self.unit_ids[self.d_idx[k]],
                self.first_day + dt.timedelta(days=int(day_of[k])),
                int(self.cnt[k]),
            )

    def _day_of_triple(self) -> np.ndarray:
        return np.repeat(
            np.arange(self.n_days, dtype=np.int32), np.diff(self.day_offsets)
        )

    def _unit_index(self, unit_id: str) -> int:
        try:
            return self._index[unit_id]
        except KeyError:
            raise UnknownUnit(f"no {self.level.value} unit {unit_id!r} in cube") from None

    def _day_window(self, period: Period) -> tuple[int, int]:
        """Inclusive day-index window of the period clamped to stored days; (0, -1) if empty."""
        check_period(period)
        if self.first_day is None or self.n_days == 0:
            return 0, -1
        a = max(0, (period[0] - self.first_day).days)
        b = min(self.n_days - 1, (period[1] - self.first_day).days)
        return a, b

    # -- queries -------------------------------------------------------------

    def od_matrix(
        self,
        period: Period,
        aoi: Optional[Bbox] = None,
        direction: Direction = Direction.in_and_out,
        threshold: int = 0,
    ) -> FlowLineSet:
        """Pairwise flows summed over the period as drawable flow lines.

        With an AOI, inflow keeps pairs whose destination centroid is inside,
        outflow keeps origin-inside pairs, in_and_out keeps either; without an
        AOI all pairs qualify.  Pairs with summed count <= threshold are
        dropped (strict greater-than).
        """
        direction = Direction(direction)
        if direction is Direction.intraflow:
            raise UnsupportedDirection("flow-map queries use inflow, outflow or in_and_out")
        if aoi is not None:
            check_bbox(aoi)
        if threshold < 0:
            raise InvalidInput(f"threshold must be non-negative, got {threshold}")
        a, b = self._day_window(period)
        if b < a:
            return FlowLineSet(lines=[], threshold=threshold)
        s, e = int(self.day_offsets[a]), int(self.day_offsets[b + 1])
        o, d, c = self.o_idx[s:e], self.d_idx[s:e], self.cnt[s:e]
        if aoi is not None:
            # admission depends only on the endpoints, so filtering triples
            # before pair aggregation is equivalent and far cheaper
            unit_in = _bbox_mask(aoi, self.centroid_lat, self.centroid_lon)
            if direction is Direction.inflow:
                keep = unit_in[d]
            elif direction is Direction.outflow:
                keep = unit_in[o]
            else:
                keep = unit_in[o] | unit_in[d]
            idx = np.flatnonzero(keep)
            o, d, c = o[idx], d[idx], c[idx]
        po, pd_, pc = self._pair_sums(o, d, c, threshold=threshold)

        lines = [
            FlowLine(
                origin_id=self.unit_ids[o],
                origin_centroid=(float(self.centroid_lat[o]), float(self.centroid_lon[o])),
                destination_id=self.unit_ids[d],
                destination_centroid=(float(self.centroid_lat[d]), float(self.centroid_lon[d])),
                count=int(c),
            )
            for o, d, c in zip(po, pd_, pc)
        ]
        return FlowLineSet(lines=lines, threshold=threshold)

    def _pair_sums(self, o: np.ndarray, d: np.ndarray, c: np.ndarray, threshold: int = 0):
        """Sum counts per (o, d) pair, keeping sums > threshold, ordered by (o, d)."""
        n_units = len(self.unit_ids)
        if len(o) == 0:
            empty = np.empty(0, np.int64)
            return empty.astype(np.int32), empty.astype(np.int32), empty
        key = o.astype(np.int64) * n_units + d.astype(np.int64)
        if n_units * n_units <= _PAIR_BINCOUNT_CAP:
            sums = np.bincount(key, weights=c, minlength=n_units * n_units)
            keys = np.flatnonzero(sums > threshold)
            pc = sums[keys].astype(np.int64)
        else:
            keys, inv = np.unique(key, return_inverse=True)
            pc = np.bincount(inv, weights=c).astype(np.int64)
            if threshold > 0:
                keep = pc > threshold
                keys, pc = keys[keep], pc[keep]
        return (keys // n_units).astype(np.int32), (keys % n_units).astype(np.int32), pc

    def dt_matrix(self, origin_id: str, period: Period) -> dict[str, list[int]]:
        """Per-destination dense daily counts of flows leaving one origin."""
        u = self._unit_index(origin_id)
        a, b = self._day_window(period)
        span = (period[1] - period[0]).days + 1
        out: dict[int, np.ndarray] = {}
        offset_day0 = (self.first_day - period[0]).days if self.first_day else 0
        for k in range(a, b + 1):
            s, e = int(self.day_offsets[k]), int(self.day_offsets[k + 1])
            lo = s + int(np.searchsorted(self.o_idx[s:e], u, side="left"))
            hi = s + int(np.searchsorted(self.o_idx[s:e], u, side="right"))
            col = k + offset_day0
            for j in range(lo, hi):
                row = out.get(self.d_idx[j])
                if row is None:
                    row = np.zeros(span, dtype=np.int64)
                    out[self.d_idx[j]] = row
                row[col] = self.cnt[j]
        return {
            self.unit_ids[i]: [int(v) for v in out[i]] for i in sorted(out)
        }

    def ot_matrix(self, destination_id: str, period: Period) -> dict[str, list[int]]:
        """Per-origin dense daily counts of flows entering one destination."""
        u = self._unit_index(destination_id)
        a, b = self._day_window(period)
        span = (period[1] - period[0]).days + 1
        out: dict[int, np.ndarray] = {}
        offset_day0 = (self.first_day - period[0]).days if self.first_day else 0
        for k in range(a, b + 1):
            s, e = int(self.day_offsets[k]), int(self.day_offsets[k + 1])
            lo = s + int(np.searchsorted(self._dest_d[s:e], u, side="left"))
            hi = s + int(np.searchsorted(self._dest_d[s:e], u, side="right"))
            col = k + offset_day0
            for j in range(lo, hi):
                row = out.get(self._dest_o[j])
                if row is None:
                    row = np.zeros(span, dtype=np.int64)
                    out[self._dest_o[j]] = row
                row[col] = self._dest_cnt[j]
        return {
            self.unit_ids[i]: [int(v) for v in out[i]] for i in sorted(out)
        }

    def choropleth(self, unit_id: str, period: Period, direction: Direction) -> ChoroplethVector:
        """Aggregated movement between the selected unit and each other unit."""
        direction = Direction(direction)
        if direction is Direction.intraflow:
            raise UnsupportedDirection(
                "intraflow is a time-series direction; choropleth uses inflow, outflow or in_and_out"
            )
        u = self._unit_index(unit_id)
        acc = np.zeros(len(self.unit_ids), dtype=np.int64)
        if direction in (Direction.inflow, Direction.in_and_out):
            self._accumulate_partners(u, period, into_unit=True, acc=acc)
        if direction in (Direction.outflow, Direction.in_and_out):
            self._accumulate_partners(u, period, into_unit=False, acc=acc)
        acc[u] = 0  # flows between the unit and itself are not "between other units"
        values = {self.unit_ids[i]: int(acc[i]) for i in np.flatnonzero(acc)}
        return ChoroplethVector(values=values, selected_unit=unit_id, direction=direction, period=period)

    def _accumulate_partners(self, u: int, period: Period, into_unit: bool, acc: np.ndarray) -> None:
        a, b = self._day_window(period)
        if into_unit:
            keys, partners, counts = self._dest_d, self._dest_o, self._dest_cnt
        else:
            keys, partners, counts = self.o_idx, self.d_idx, self.cnt
        for k in range(a, b + 1):
            s, e = int(self.day_offsets[k]), int(self.day_offsets[k + 1])
            lo = s + int(np.searchsorted(keys[s:e], u, side="left"))
            hi = s + int(np.searchsorted(keys[s:e], u, side="right"))
            if hi > lo:
                np.add.at(acc, partners[lo:hi], counts[lo:hi])

    def daily_series(self, unit_id: str, period: Period, direction: Direction) -> TimeSeries:
        """Daily totals for one unit from the precomputed marginals."""
        direction = Direction(direction)
        u = self._unit_index(unit_id)
        check_period(period)
        span = (period[1] - period[0]).days + 1
        counts = np.zeros(span, dtype=np.int64)
        a, b = self._day_window(period)
        if b >= a:
            if direction is Direction.inflow:
                window = self.inflow[u, a : b + 1]
            elif direction is Direction.outflow:
                window = self.outflow[u, a : b + 1]
            elif direction is Direction.intraflow:
                window = self.intraflow[u, a : b + 1]
            else:
                window = self.inflow[u, a : b + 1] + self.outflow[u, a : b + 1]
            col = a + (self.first_day - period[0]).days
            counts[col : col + (b - a + 1)] = window
        days = [period[0] + dt.timedelta(days=i) for i in range(span)]
        return TimeSeries(unit_id=unit_id, direction=direction, days=days, counts=[int(v) for v in counts])

    def audit(self) -> AuditReport:
        """Recompute the marginals from the triples and report any mismatch."""
        day_of = self._day_of_triple()
        inflow, outflow, intraflow = _compute_marginals(
            day_of, self.o_idx, self.d_idx, self.cnt, len(self.unit_ids), self.n_days
        )
        mismatches: list[AuditMismatch] = []
        for name, stored, fresh in (
            ("inflow", self.inflow, inflow),
            ("outflow", self.outflow, outflow),
            ("intraflow", self.intraflow, intraflow),
        ):
            if stored.shape != fresh.shape:
                raise InvalidInput(f"{name} marginal has shape {stored.shape}, expected {fresh.shape}")
            bad_units, bad_days = np.nonzero(stored != fresh)
            for ui, di in zip(bad_units, bad_days):
                mismatches.append(
                    AuditMismatch(
                        unit_id=self.unit_ids[ui],
                        date=self.first_day + dt.timedelta(days=int(di)),
                        marginal=name,
                        stored=int(stored[ui, di]),
                        recomputed=int(fresh[ui, di]),
                    )
                )
        return AuditReport(mismatches=mismatches)

    # -- export ---------------------------------------------------------------

    def _export_selection(self, period: Period, bbox: Optional[Bbox]):
        """Triple-range slice plus bbox admission mask for export queries."""
        a, b = self._day_window(period)
        if b < a:
            z = np.empty(0, np.int64)
            return z.astype(np.int32), z.astype(np.int32), z.astype(np.int32), z, None
        s, e = int(self.day_offsets[a]), int(self.day_offsets[b + 1])
        day = self._day_of_triple()[s:e]
        o, d, c = self.o_idx[s:e], self.d_idx[s:e], self.cnt[s:e]
        sel = slice(s, e)
        if bbox is not None:
            check_bbox(bbox)
            keep = _bbox_mask(bbox, self.centroid_lat[o], self.centroid_lon[o]) | _bbox_mask(
                bbox, self.centroid_lat[d], self.centroid_lon[d]
            )
            idx = np.flatnonzero(keep)
            day, o, d, c = day[idx], o[idx], d[idx], c[idx]
            sel = s + idx
        return day, o, d, c, sel

    def export_row_count(self, period: Period, bbox: Optional[Bbox], aggregated: bool) -> int:
        day, o, d, c, _ = self._export_selection(period, bbox)
        if not aggregated:
            return len(day)
        return len(self._pair_sums(o, d, c)[2])

    @property
    def _centroid_csv(self) -> list[str]:
        """Per-unit '"lat,lon"' fragments with fixed 6-decimal formatting."""
        cached = getattr(self, "_centroid_csv_cache", None)
        if cached is None:
            cached = [
                f"{lat + 0.0:.6f},{lon + 0.0:.6f}"
                for lat, lon in zip(self.centroid_lat.tolist(), self.centroid_lon.tolist())
            ]
            self._centroid_csv_cache = cached
        return cached

    def export_csv_chunks(
        self,
        period: Period,
        bbox: Optional[Bbox] = None,
        aggregated: bool = False,
        chunk_rows: int = 100_000,
    ) -> Iterator[str]:
        """CSV text chunks (header first); rows sorted by (o_fips, d_fips, date)."""
        day, o, d, c, sel = self._export_selection(period, bbox)
        ids = self.unit_ids
        if aggregated:
            yield AGGREGATED_EXPORT_HEADER + "\n"
            po, pd_, pc, coords = self._aggregated_pairs(day, o, d, c, sel)
            po_l, pd_l, pc_l = po.tolist(), pd_.tolist(), pc.tolist()
            if coords is None:
                cen = self._centroid_csv
                row_iter = (
                    f"{ids[a]},{ids[b]},{n},{cen[a]},{cen[b]}"
                    for a, b, n in zip(po_l, pd_l, pc_l)
                )
            else:
                o_lat, o_lon, d_lat, d_lon = (arr.tolist() for arr in coords)
                row_iter = (
                    f"{ids[a]},{ids[b]},{n},{x1:.6f},{y1:.6f},{x2:.6f},{y2:.6f}"
                    for a, b, n, x1, y1, x2, y2 in zip(
                        po_l, pd_l, pc_l, o_lat, o_lon, d_lat, d_lon
                    )
                )
            yield from _joined_chunks(row_iter, chunk_rows)
            return

        yield DAILY_EXPORT_HEADER + "\n"
        if len(day) == 0:
            return
        order = np.lexsort((day, d, o))
        day, o, d, c = day[order], o[order], d[order], c[order]
        date_parts = []
        for k in range(self.n_days):
            date = self.first_day + dt.timedelta(days=k)
            date_parts.append(f"{date.year},{date.month},{date.day}")
        day_l, o_l, d_l, c_l = day.tolist(), o.tolist(), d.tolist(), c.tolist()
        if self.coord_sums is None:
            cen = self._centroid_csv
            row_iter = (
                f"{ids[a]},{ids[b]},{date_parts[k]},{n},{cen[a]},{cen[b]}"
                for a, b, k, n in zip(o_l, d_l, day_l, c_l)
            )
        else:
            if isinstance(sel, slice):
                sel = np.arange(sel.start, sel.stop)[order]
            else:
                sel = sel[order]
            cf = c.astype(np.float64)
            o_lat, o_lon, d_lat, d_lon = (
                (arr[sel] / cf + 0.0).tolist() for arr in self.coord_sums
            )
            row_iter = (
                f"{ids[a]},{ids[b]},{date_parts[k]},{n},{x1:.6f},{y1:.6f},{x2:.6f},{y2:.6f}"
                for a, b, k, n, x1, y1, x2, y2 in zip(
                    o_l, d_l, day_l, c_l, o_lat, o_lon, d_lat, d_lon
                )
            )
        yield from _joined_chunks(row_iter, chunk_rows)

    def _aggregated_pairs(self, day, o, d, c, sel):
        """Pair sums plus per-pair mean-center coords (None means unit centroids)."""
        po, pd_, pc = self._pair_sums(o, d, c)
        if self.coord_sums is None or len(pc) == 0:
            return po, pd_, pc, None
        n_units = len(self.unit_ids)
        key = o.astype(np.int64) * n_units + d.astype(np.int64)
        pair_key = po.astype(np.int64) * n_units + pd_.astype(np.int64)
        inv = np.searchsorted(pair_key, key)
        if isinstance(sel, slice):
            sel = np.arange(sel.start, sel.stop)
        cf = pc.astype(np.float64)
        coords = tuple(
            np.bincount(inv, weights=arr[sel], minlength=len(pair_key)) / cf + 0.0
            for arr in self.coord_sums
        )
        return po, pd_, pc, coords

    # -- serialization ----------------------------------------------------------

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        header = {
            "dataset": self.dataset.value,
            "first_day": self.first_day.isoformat() if self.first_day else None,
            "format_version": _FORMAT_VERSION,
            "has_coord_sums": self.coord_sums is not None,
            "level": self.level.value,
            "n_days": self.n_days,
            "n_triples": self.n_triples,
            "n_units": len(self.unit_ids),
        }
        header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        buf.write(_MAGIC)
        buf.write(struct.pack("<I", len(header_bytes)))
        buf.write(header_bytes)
        unit_blob = "\n".join(self.unit_ids).encode("utf-8")
        buf.write(struct.pack("<Q", len(unit_blob)))
        buf.write(unit_blob)
        for arr, dtype in (
            (self.centroid_lat, "<f8"),
            (self.centroid_lon, "<f8"),
            (self.day_offsets, "<i8"),
            (self.o_idx, "<i4"),
            (self.d_idx, "<i4"),
            (self.cnt, "<i8"),
        ):
            buf.write(np.ascontiguousarray(arr, dtype=dtype).tobytes())
        if self.coord_sums is not None:
            for arr in self.coord_sums:
                buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        for arr in (self.inflow, self.outflow, self.intraflow):
            buf.write(np.ascontiguousarray(arr, dtype="<i8").tobytes())
        return buf.getvalue()

    def write(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def from_bytes(cls, blob: bytes) -> "OdtCube":
        if blob[: len(_MAGIC)] != _MAGIC:
            raise InvalidInput("not a cube file")
        pos = len(_MAGIC)
        (header_len,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        header = json.loads(blob[pos : pos + header_len].decode("utf-8"))
        pos += header_len
        if header.get("format_version") != _FORMAT_VERSION:
            raise InvalidInput(f"unsupported cube format version {header.get('format_version')}")
        (unit_blob_len,) = struct.unpack_from("<Q", blob, pos)
        pos += 8
        unit_blob = blob[pos : pos + unit_blob_len].decode("utf-8")
        pos += unit_blob_len
        unit_ids = unit_blob.split("\n") if unit_blob else []
        n_units, n_days, n_triples = header["n_units"], header["n_days"], header["n_triples"]
        if len(unit_ids) != n_units:
            raise InvalidInput("unit table length mismatch")

        def take(count: int, dtype: str) -> np.ndarray:
            nonlocal pos
            arr = np.frombuffer(blob, dtype=dtype, count=count, offset=pos)
            pos += arr.nbytes
            return arr

        centroid_lat = take(n_units, "<f8")
        centroid_lon = take(n_units, "<f8")
        day_offsets = take(n_days + 1, "<i8")
        o_idx = take(n_triples, "<i4")
        d_idx = take(n_triples, "<i4")
        cnt = take(n_triples, "<i8")
        coord_sums = None
        if header["has_coord_sums"]:
            coord_sums = tuple(take(n_triples, "<f8") for _ in range(4))
        marginals = tuple(
            take(n_units * n_days, "<i8").reshape(n_units, n_days) for _ in range(3)
        )
        first_day = dt.date.fromisoformat(header["first_day"]) if header["first_day"] else None
        return cls(
            dataset=Dataset(header["dataset"]),
            level=GeoLevel(header["level"]),
            unit_ids=unit_ids,
            centroid_lat=centroid_lat,
            centroid_lon=centroid_lon,
            first_day=first_day,
            n_days=n_days,
            day_offsets=day_offsets,
            o_idx=o_idx,
            d_idx=d_idx,
            cnt=cnt,
            coord_sums=coord_sums,
            marginals=marginals,
        )

    @classmethod
    def read(cls, path: str | Path) -> "OdtCube":
        return cls.from_bytes(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# Building cubes from flow records.

_EVENT_KINDS = {FlowKind.single_day, FlowKind.cross_day}


def _dataset_of_kind(kind: FlowKind) -> Dataset:
    return Dataset.safegraph if kind is FlowKind.sdm else Dataset.twitter


def build_cube(
    records: Iterable[FlowRecord],
    level: GeoLevel,
    registry: UnitRegistry,
    dataset: Optional[Dataset] = None,
) -> OdtCube:
    """Aggregate finest-granularity records into a cube at the target level.

    Coordinate endpoints are resolved by point-in-polygon, id endpoints by
    FIPS-prefix rollup (or the registry's explicit parent links).  Records
    with an unresolvable endpoint are dropped and counted, as are device-panel
    self loops (zero-distance by definition).  Mixing event-derived and
    device-panel records raises :class:`MixedDataset`.
    """
    level = GeoLevel(level)
    unit_ids = registry.ids_at(level)
    index = {u: i for i, u in enumerate(unit_ids)}
    units = registry.units_at(level)
    report = BuildReport()
    seen_families: set[Dataset] = set()

    days: list[dt.date] = []
    o_list: list[int] = []
    d_list: list[int] = []
    cnt_list: list[int] = []
    coords: tuple[list[float], list[float], list[float], list[float]] = ([], [], [], [])

    resolve_cache: dict[str, Optional[int]] = {}

    def roll_id(endpoint_id: str) -> Optional[int]:
        hit = resolve_cache.get(endpoint_id, _MISSING)
        if hit is not _MISSING:
            return hit
        idx = _roll_id_uncached(endpoint_id, level, registry, index)
        resolve_cache[endpoint_id] = idx
        return idx

    for record in records:
        report.records_in += 1
        seen_families.add(_dataset_of_kind(record.kind))
        if len(seen_families) > 1:
            raise MixedDataset("record stream mixes event-derived and device-panel flows")

        if record.kind in _EVENT_KINDS:
            o_unit = registry.resolve(record.origin, level)
            d_unit = registry.resolve(record.destination, level)
            if o_unit is None or d_unit is None:
                report.dropped_unresolved += 1
                continue
            oi, di = index[o_unit.id], index[d_unit.id]
            o_lat, o_lon = record.origin.lat, record.origin.lon
            d_lat, d_lon = record.destination.lat, record.destination.lon
        else:
            # A diagonal record at block-group granularity is a device-panel
            # self loop (zero movement).  Diagonal records carrying coarser
            # ids are pre-aggregated intraflow cells (e.g. re-ingested
            # exports) and stay.
            if record.origin == record.destination and (
                _FIPS_LEVEL_BY_LENGTH.get(len(record.origin)) is GeoLevel.block_group
            ):
                report.dropped_self_loops += 1
                continue
            oi = roll_id(record.origin)
            di = roll_id(record.destination)
            if oi is None or di is None:
                report.dropped_unresolved += 1
                continue
            o_lat, o_lon = _finest_coords(record.origin, registry, units[unit_ids[oi]])
            d_lat, d_lon = _finest_coords(record.destination, registry, units[unit_ids[di]])

        report.records_kept += 1
        days.append(record.date)
        o_list.append(oi)
        d_list.append(di)
        cnt_list.append(record.count)
        coords[0].append(o_lat * record.count)
        coords[1].append(o_lon * record.count)
        coords[2].append(d_lat * record.count)
        coords[3].append(d_lon * record.count)

    if dataset is None:
        dataset = seen_families.pop() if len(seen_families) == 1 else Dataset.twitter

    centroid_lat = np.array([units[u].centroid[0] for u in unit_ids], dtype=np.float64)
    centroid_lon = np.array([units[u].centroid[1] for u in unit_ids], dtype=np.float64)

    if not days:
        return OdtCube.from_arrays(
            dataset, level, unit_ids, centroid_lat, centroid_lon, None, 0,
            np.empty(0, np.int32), np.empty(0, np.int32), np.empty(0, np.int32), np.empty(0, np.int64),
            coord_sums=tuple(np.empty(0, np.float64) for _ in range(4)),
            build_report=report,
        )

    first_day, last_day = min(days), max(days)
    n_days = (last_day - first_day).days + 1
    day_arr = np.array([(d - first_day).days for d in days], dtype=np.int32)
    return OdtCube.from_arrays(
        dataset,
        level,
        unit_ids,
        centroid_lat,
        centroid_lon,
        first_day,
        n_days,
        day_arr,
        np.array(o_list, dtype=np.int32),
        np.array(d_list, dtype=np.int32),
        np.array(cnt_list, dtype=np.int64),
        coord_sums=tuple(np.array(c, dtype=np.float64) for c in coords),
        build_report=report,
    )


_MISSING = object()


def _roll_id_uncached(
    endpoint_id: str, level: GeoLevel, registry: UnitRegistry, index: dict[str, int]
) -> Optional[int]:
    target_len = level.fips_length
    if target_len is not None:
        if len(endpoint_id) < target_len:
            return None
        candidate = endpoint_id[:target_len]
    else:
        from_level = _FIPS_LEVEL_BY_LENGTH.get(len(endpoint_id))
        if from_level is None:
            return None
        try:
            candidate = registry.parent_id(endpoint_id, from_level, level)
        except Exception:
            return None
    return index.get(candidate)


def _finest_coords(endpoint_id: str, registry: UnitRegistry, fallback_unit) -> tuple[float, float]:
    finest_level = _FIPS_LEVEL_BY_LENGTH.get(len(endpoint_id))
    if finest_level is not None:
        unit = registry.units_at(finest_level).get(endpoint_id)
        if unit is not None:
            return unit.centroid
    return fallback_unit.centroid
