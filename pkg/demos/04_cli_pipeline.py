"""End-to-end operator pipeline through the CLI: synthesize raw inputs,
ingest both sources, build cubes at two levels, and run an offline export.

Run:  python3 demos/04_cli_pipeline.py
"""

import csv
import datetime as dt
import json
import random
import subprocess
import sys
import tempfile
from pathlib import Path


def run(*args: str) -> str:
    result = subprocess.run(
        [sys.executable, "-m", "odcube.cli", *args], capture_output=True, text=True
    )
    if result.returncode != 0:
        raise SystemExit(f"command failed: {args}\n{result.output if hasattr(result, 'output') else result.stderr}")
    return result.stdout


work = Path(tempfile.mkdtemp(prefix="odcube-demo-"))
print(f"working under {work}\n")

# Boundaries: one state split into two square counties.
def square(min_lon, min_lat, max_lon, max_lat):
    ring = [
        [min_lon, min_lat], [max_lon, min_lat], [max_lon, max_lat],
        [min_lon, max_lat], [min_lon, min_lat],
    ]
    return {"type": "Polygon", "coordinates": [ring]}


geojson = {
    "type": "FeatureCollection",
    "features": [
        {"type": "Feature", "properties": {"id": "45", "level": "state", "name": "Palmetto"},
         "geometry": square(-82, 33, -80, 35)},
        {"type": "Feature", "properties": {"id": "45063", "level": "county", "name": "West"},
         "geometry": square(-82, 33, -81, 35)},
        {"type": "Feature", "properties": {"id": "45079", "level": "county", "name": "East"},
         "geometry": square(-81, 33, -80, 35)},
    ],
}
geo_path = work / "boundaries.geojson"
geo_path.write_text(json.dumps(geojson))

# Raw geotagged events: 30 users wandering between the two counties.
rng = random.Random(1)
events_path = work / "events.csv"
with open(events_path, "w", newline="") as fh:
    writer = csv.writer(fh)
    writer.writerow(["user_id", "timestamp", "lat", "lon", "source", "resolution"])
    for u in range(30):
        for day in range(1, 8):
            for _ in range(rng.randint(0, 3)):
                stamp = dt.datetime(2020, 3, day, rng.randrange(24), rng.randrange(60))
                writer.writerow([
                    f"u{u:03d}", stamp.isoformat() + "+00:00",
                    round(rng.uniform(33.1, 34.9), 5), round(rng.uniform(-81.9, -80.1), 5),
                    rng.choice(["phone-app", "phone-app", "web", "TweetMyJOBS"]),
                    rng.choice(["point", "point", "poi", "city", "admin"]),
                ])

print("== odcube ingest-events ==")
print(run("ingest-events", "--input", str(events_path), "--geo", str(geo_path),
          "--out", str(work / "twitter_records")))

print("== odcube build (twitter, state+county) ==")
print(run("build", "--records", str(work / "twitter_records"), "--dataset", "twitter",
          "--levels", "state,county", "--geo", str(geo_path), "--out", str(work / "data")))

print("== odcube export (offline CSV) ==")
spec_path = work / "export_spec.json"
spec_path.write_text(json.dumps({
    "dataset": "twitter", "level": "county",
    "start": "2020-03-01", "end": "2020-03-07", "aggregated": True,
}))
print(run("export", "--spec", str(spec_path), "--data-dir", str(work / "data"),
          "--out", str(work / "flows.csv")))
print((work / "flows.csv").read_text())

print(f"artifacts kept under {work}")
print("serve them with:  odcube serve --data-dir", work / "data", "--port 8645")
