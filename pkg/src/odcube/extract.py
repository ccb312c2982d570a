"""Flow extraction pipelines.

Two ETL paths produce finest-granularity :class:`FlowRecord` batches:

* geotagged event streams -> per-user single-day flows (first location of a
  day to the location farthest from it) and cross-day flows (mean center of
  one day to the mean center of the next);
* social-distancing rows -> one block-group OD record per destination entry.

All operations are pure over their inputs, so partitions (by user, by row)
may be processed concurrently and merged; outputs are order-independent
multisets.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Optional, Union

from .errors import (
    InvalidInput,
    MalformedDate,
    MalformedDestinationMap,
    MalformedSdmRow,
)
from .geo import GeoPoint, haversine_km, mean_center

CBG_ID_LENGTH = 12


class Resolution(str, Enum):
    """Geotag precision, finest to coarsest."""

    point = "point"
    poi = "poi"
    neighborhood = "neighborhood"
    city = "city"
    admin = "admin"
    country = "country"

    @property
    def rank(self) -> int:
        return _RESOLUTION_RANK[self]


_RESOLUTION_RANK = {
    Resolution.point: 0,
    Resolution.poi: 1,
    Resolution.neighborhood: 2,
    Resolution.city: 3,
    Resolution.admin: 4,
    Resolution.country: 5,
}


class FlowKind(str, Enum):
    single_day = "single_day"
    cross_day = "cross_day"
    sdm = "sdm"


Endpoint = Union[GeoPoint, str]


@dataclass(frozen=True)
class GeoEvent:
    user_id: str
    timestamp: dt.datetime
    point: GeoPoint
    source: str
    resolution: Resolution

    def utc_day(self) -> dt.date:
        ts = self.timestamp
        if ts.tzinfo is not None:
            ts = ts.astimezone(dt.timezone.utc)
        return ts.date()


@dataclass(frozen=True)
class FlowRecord:
    """One daily OD flow at finest granularity.

    Event-derived flows carry raw coordinates as endpoints; device-panel
    flows carry block-group ids (and may be self loops).
    """

    origin: Endpoint
    destination: Endpoint
    date: dt.date
    count: int
    kind: FlowKind

    def __post_init__(self) -> None:
        if self.count < 1:
            raise InvalidInput(f"flow count must be >= 1, got {self.count}")
        if self.kind is FlowKind.sdm:
            if not (isinstance(self.origin, str) and isinstance(self.destination, str)):
                raise InvalidInput("sdm flows use unit-id endpoints")
        else:
            if not (isinstance(self.origin, GeoPoint) and isinstance(self.destination, GeoPoint)):
                raise InvalidInput(f"{self.kind.value} flows use coordinate endpoints")
            if self.kind is FlowKind.single_day and self.origin == self.destination:
                raise InvalidInput("single_day flow must cover a nonzero distance")


@dataclass(frozen=True)
class SdmRow:
    """The three social-distancing columns the pipeline consumes."""

    origin_census_block_group: str
    destination_cbgs: str
    date_range_start: str


@dataclass(frozen=True)
class FilterConfig:
    """Event cleaning rules: bot sources to drop and the coarsest kept resolution."""

    bot_sources: frozenset[str] = frozenset({"TweetMyJOBS"})
    max_resolution: Resolution = Resolution.city

    def __post_init__(self) -> None:
        if not self.bot_sources:
            raise InvalidInput("bot source list must be non-empty")


@dataclass
class FilterStats:
    dropped_bot: int = 0
    dropped_resolution: int = 0


def filter_events(
    events: Iterable[GeoEvent], cfg: FilterConfig, stats: Optional[FilterStats] = None
) -> Iterator[GeoEvent]:
    """Drop bot-sourced events and events geotagged coarser than ``cfg.max_resolution``."""
    for event in events:
        if event.source in cfg.bot_sources:
            if stats is not None:
                stats.dropped_bot += 1
            continue
        if event.resolution.rank > cfg.max_resolution.rank:
            if stats is not None:
                stats.dropped_resolution += 1
            continue
        yield event


def extract_single_day(user_day_events: list[GeoEvent]) -> Optional[FlowRecord]:
    """Daily maximum-travel flow: first location of the day to the farthest location.

    Requires the events of one user on one UTC day, ordered by timestamp.
    Distance ties keep the earliest event; a day with fewer than two events or
    zero maximum distance yields nothing.
    """
    if len(user_day_events) < 2:
        return None
    for earlier, later in zip(user_day_events, user_day_events[1:]):
        if later.timestamp < earlier.timestamp:
            raise InvalidInput("events must be ordered by timestamp")
    initial = user_day_events[0]
    best = None
    best_km = 0.0
    for event in user_day_events[1:]:
        km = haversine_km(initial.point, event.point)
        if km > best_km:
            best_km = km
            best = event
    if best is None or best_km == 0.0:
        return None
    return FlowRecord(
        origin=initial.point,
        destination=best.point,
        date=initial.utc_day(),
        count=1,
        kind=FlowKind.single_day,
    )


def extract_cross_day(
    day_a_events: list[GeoEvent], day_b_events: list[GeoEvent]
) -> Optional[FlowRecord]:
    """Mean-center shift between two consecutive days of one user.

    Returns nothing when either day is empty or the shift distance is zero;
    dated on the arrival day.
    """
    if not day_a_events or not day_b_events:
        return None
    day_a = {e.utc_day() for e in day_a_events}
    day_b = {e.utc_day() for e in day_b_events}
    if len(day_a) != 1 or len(day_b) != 1:
        raise InvalidInput("each side must hold events of a single UTC day")
    (date_a,) = day_a
    (date_b,) = day_b
    if date_b != date_a + dt.timedelta(days=1):
        raise InvalidInput(f"days not consecutive: {date_a} -> {date_b}")
    origin = mean_center([e.point for e in day_a_events])
    destination = mean_center([e.point for e in day_b_events])
    if haversine_km(origin, destination) == 0.0:
        return None
    return FlowRecord(
        origin=origin,
        destination=destination,
        date=date_b,
        count=1,
        kind=FlowKind.cross_day,
    )


def extract_user_flows(
    events: Iterable[GeoEvent],
    cfg: Optional[FilterConfig] = None,
    filter_stats: Optional[FilterStats] = None,
) -> list[FlowRecord]:
    """All single-day and cross-day flows of one user's event stream.

    Filters first, buckets by UTC day, then emits per-day single-day flows
    and cross-day flows over consecutive-day pairs.  A user with no >=2-event
    day and no consecutive-day pair contributes nothing.
    """
    cfg = cfg if cfg is not None else FilterConfig()
    buckets: dict[dt.date, list[GeoEvent]] = {}
    for event in filter_events(events, cfg, stats=filter_stats):
        buckets.setdefault(event.utc_day(), []).append(event)
    for day_events in buckets.values():
        day_events.sort(key=lambda e: e.timestamp)

    flows: list[FlowRecord] = []
    for day in sorted(buckets):
        single = extract_single_day(buckets[day])
        if single is not None:
            flows.append(single)
        previous = day - dt.timedelta(days=1)
        if previous in buckets:
            cross = extract_cross_day(buckets[previous], buckets[day])
            if cross is not None:
                flows.append(cross)
    return flows


def parse_destination_cbgs(text: str) -> list[tuple[str, int]]:
    """Parse a destination map into (block group id, count) pairs.

    Accepts the JSON object form ``{"0123...":4}`` and the quote-stripped
    brace form ``{0123...:4}``.  Ids must be 12 digits and counts integers;
    zero-count entries are dropped.
    """
    stripped = text.strip()
    entries: list[tuple[str, object]] = []
    try:
        parsed = json.loads(stripped)
        if not isinstance(parsed, dict):
            raise MalformedDestinationMap(f"not a map: {text!r}")
        entries = list(parsed.items())
    except json.JSONDecodeError:
        if not (stripped.startswith("{") and stripped.endswith("}")):
            raise MalformedDestinationMap(f"not a map: {text!r}") from None
        body = stripped[1:-1].replace('"', "").strip()
        if body:
            for token in body.split(","):
                key, sep, value = token.partition(":")
                if not sep:
                    raise MalformedDestinationMap(f"bad entry {token!r}") from None
                entries.append((key.strip(), value.strip()))

    pairs: list[tuple[str, int]] = []
    for key, value in entries:
        cbg = str(key)
        if len(cbg) != CBG_ID_LENGTH or not cbg.isdigit():
            raise MalformedDestinationMap(f"bad destination id {cbg!r}")
        try:
            count = int(value)
        except (TypeError, ValueError):
            raise MalformedDestinationMap(f"bad count {value!r} for {cbg}") from None
        if count < 0:
            raise MalformedDestinationMap(f"negative count {count} for {cbg}")
        if count == 0:
            continue
        pairs.append((cbg, count))
    return pairs


def _parse_sdm_date(text: str) -> dt.date:
    # Calendar date in the row's stated offset, not converted to UTC.
    try:
        return dt.datetime.fromisoformat(text.strip().replace("Z", "+00:00")).date()
    except ValueError:
        raise MalformedDate(f"bad timestamp {text!r}") from None


def explode_sdm_row(row: SdmRow) -> list[FlowRecord]:
    """One flow record per destination entry of a social-distancing row."""
    origin = row.origin_census_block_group.strip()
    if len(origin) != CBG_ID_LENGTH or not origin.isdigit():
        raise MalformedSdmRow(f"bad origin block group {origin!r}")
    date = _parse_sdm_date(row.date_range_start)
    return [
        FlowRecord(origin=origin, destination=cbg, date=date, count=count, kind=FlowKind.sdm)
        for cbg, count in parse_destination_cbgs(row.destination_cbgs)
    ]


@dataclass
class SdmStats:
    rows_read: int = 0
    rows_malformed: int = 0
    records: int = 0
    total_count: int = 0


def explode_sdm_rows(rows: Iterable[SdmRow], stats: Optional[SdmStats] = None) -> Iterator[FlowRecord]:
    """Explode a row stream, skipping (and counting) malformed rows."""
    stats = stats if stats is not None else SdmStats()
    for row in rows:
        stats.rows_read += 1
        try:
            records = explode_sdm_row(row)
        except MalformedSdmRow:
            stats.rows_malformed += 1
            continue
        for record in records:
            stats.records += 1
            stats.total_count += record.count
            yield record


# ---------------------------------------------------------------------------
# File formats: raw events (CSV / NDJSON), SDM CSV, and record batches.

_EVENT_FIELDS = ("user_id", "timestamp", "lat", "lon", "source", "resolution")


def _event_from_mapping(row: dict) -> GeoEvent:
    missing = [k for k in _EVENT_FIELDS if k not in row or row[k] in (None, "")]
    if missing:
        raise InvalidInput(f"event missing fields {missing}: {row!r}")
    try:
        timestamp = dt.datetime.fromisoformat(str(row["timestamp"]).replace("Z", "+00:00"))
    except ValueError:
        raise InvalidInput(f"bad event timestamp {row['timestamp']!r}") from None
    return GeoEvent(
        user_id=str(row["user_id"]),
        timestamp=timestamp,
        point=GeoPoint(lat=float(row["lat"]), lon=float(row["lon"])),
        source=str(row["source"]),
        resolution=Resolution(str(row["resolution"])),
    )


def read_events(path: str | Path) -> Iterator[GeoEvent]:
    """Read geotagged events from CSV or newline-delimited JSON (by extension)."""
    path = Path(path)
    if path.suffix.lower() in {".json", ".ndjson", ".jsonl"}:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    yield _event_from_mapping(json.loads(line))
    else:
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                yield _event_from_mapping(row)


def read_sdm_csv(path: str | Path) -> Iterator[SdmRow]:
    """Read social-distancing rows; only the three used columns are required."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            yield SdmRow(
                origin_census_block_group=row.get("origin_census_block_group", "") or "",
                destination_cbgs=row.get("destination_cbgs", "") or "",
                date_range_start=row.get("date_range_start", "") or "",
            )


def _endpoint_to_json(endpoint: Endpoint):
    if isinstance(endpoint, GeoPoint):
        return [endpoint.lat, endpoint.lon]
    return endpoint


def _endpoint_from_json(value) -> Endpoint:
    if isinstance(value, str):
        return value
    lat, lon = value
    return GeoPoint(lat=float(lat), lon=float(lon))


def write_records(records: Iterable[FlowRecord], path: str | Path) -> int:
    """Write a record batch as NDJSON; returns the number of records written."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(
                json.dumps(
                    {
                        "kind": record.kind.value,
                        "date": record.date.isoformat(),
                        "count": record.count,
                        "origin": _endpoint_to_json(record.origin),
                        "destination": _endpoint_to_json(record.destination),
                    },
                    separators=(",", ":"),
                )
            )
            fh.write("\n")
            n += 1
    return n


def read_records(path: str | Path) -> Iterator[FlowRecord]:
    """Read a record batch written by :func:`write_records`."""
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            raw = json.loads(line)
            yield FlowRecord(
                origin=_endpoint_from_json(raw["origin"]),
                destination=_endpoint_from_json(raw["destination"]),
                date=dt.date.fromisoformat(raw["date"]),
                count=int(raw["count"]),
                kind=FlowKind(raw["kind"]),
            )


def write_records_csv(records: Iterable[FlowRecord], path: str | Path) -> int:
    """Flat CSV dump of a record batch (id columns for device-panel flows,
    coordinate columns for event-derived flows)."""
    n = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["kind", "date", "count", "o_cbg", "d_cbg", "o_lat", "o_lon", "d_lat", "d_lon"])
        for record in records:
            if record.kind is FlowKind.sdm:
                row = [record.kind.value, record.date.isoformat(), record.count,
                       record.origin, record.destination, "", "", "", ""]
            else:
                row = [record.kind.value, record.date.isoformat(), record.count, "", "",
                       record.origin.lat, record.origin.lon,
                       record.destination.lat, record.destination.lon]
            writer.writerow(row)
            n += 1
    return n
