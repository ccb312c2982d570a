"""Walk through flow extraction: event cleaning, single-day and cross-day
movement, and exploding social-distancing rows.

Run:  python3 demos/01_extract_flows.py
"""

import datetime as dt

from odcube import (
    FilterConfig,
    GeoEvent,
    GeoPoint,
    Resolution,
    SdmRow,
    explode_sdm_row,
    extract_user_flows,
    filter_events,
)

UTC = dt.timezone.utc


def ts(day, hour):
    return dt.datetime(2020, 1, day, hour, tzinfo=UTC)


# One user's week: a commuter with a bot retweet and a coarse-geotag post mixed in.
events = [
    GeoEvent("u1", ts(1, 8), GeoPoint(34.00, -81.03), "phone-app", Resolution.point),
    GeoEvent("u1", ts(1, 12), GeoPoint(34.00, -80.97), "phone-app", Resolution.poi),
    GeoEvent("u1", ts(1, 19), GeoPoint(34.00, -81.02), "phone-app", Resolution.point),
    GeoEvent("u1", ts(2, 9), GeoPoint(34.05, -81.10), "web", Resolution.city),
    GeoEvent("u1", ts(2, 10), GeoPoint(34.05, -81.10), "TweetMyJOBS", Resolution.point),  # bot
    GeoEvent("u1", ts(2, 21), GeoPoint(34.02, -81.00), "web", Resolution.admin),  # too coarse
    GeoEvent("u1", ts(4, 9), GeoPoint(33.90, -80.90), "phone-app", Resolution.point),
]

print("== event cleaning ==")
cfg = FilterConfig()
kept = list(filter_events(events, cfg))
print(f"{len(events)} events in, {len(kept)} kept "
      f"(bot sources: {sorted(cfg.bot_sources)}, coarsest kept: {cfg.max_resolution.value})")

print("\n== per-user daily flows ==")
# Day 1 has three posts: the flow runs from the first location to the farthest one.
# Day 1 -> day 2 are consecutive: a cross-day flow connects the two mean centers.
# Day 2 -> day 4 has a gap, so nothing links them.
for flow in extract_user_flows(events, cfg):
    o, d = flow.origin, flow.destination
    print(f"{flow.date} {flow.kind.value:10s} ({o.lat:.3f}, {o.lon:.3f}) -> ({d.lat:.3f}, {d.lon:.3f})")

print("\n== social-distancing rows ==")
row = SdmRow(
    origin_census_block_group="450790103032",
    destination_cbgs='{"450790103031":4,"450790103032":9,"450630103011":2}',
    date_range_start="2020-03-14T00:00:00-05:00",
)
for record in explode_sdm_row(row):
    print(f"{record.date} {record.origin} -> {record.destination}: {record.count} devices")
