"""Serve a cube over HTTP and exercise every endpoint: meta, choropleth,
flow lines, daily time series, and the CSV export (daily and aggregated).

Run:  python3 demos/03_query_service.py
"""

import datetime as dt
import json
import threading
import time
import urllib.request

import uvicorn

from odcube import Dataset, GeoLevel, OdtCube
from odcube.api import CubeStore, ServiceConfig, create_app

units = {
    "45001": (34.0, -81.6),
    "45063": (34.1, -81.2),
    "45079": (34.0, -80.9),
}
d = dt.date(2020, 3, 1)
triples = [
    ("45001", "45063", d, 30),
    ("45001", "45079", d, 21),
    ("45063", "45079", d + dt.timedelta(days=1), 44),
    ("45079", "45079", d + dt.timedelta(days=1), 12),  # intraflow cell
    ("45063", "45001", d + dt.timedelta(days=2), 25),
]
cube = OdtCube.from_triples(Dataset.safegraph, GeoLevel.county, units, triples)
store = CubeStore({(cube.dataset, cube.level): cube})
app = create_app(store, ServiceConfig())

PORT = 8901
server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=PORT, log_level="error"))
thread = threading.Thread(target=server.run, daemon=True)
thread.start()
while not server.started:
    time.sleep(0.05)


def get(path: str) -> str:
    with urllib.request.urlopen(f"http://127.0.0.1:{PORT}{path}") as response:
        return response.read().decode()


base = "dataset=safegraph&level=county&start=2020-03-01&end=2020-03-03"

print("== /api/v1/meta ==")
print(json.dumps(json.loads(get("/api/v1/meta")), indent=2))

print("\n== /api/v1/choropleth (flows into 45079) ==")
print(get(f"/api/v1/choropleth?{base}&unit=45079&direction=inflow"))

print("\n== /api/v1/flows (count > 20, full coverage) ==")
for line in json.loads(get(f"/api/v1/flows?{base}&direction=in_and_out&min_count=20")):
    print(line)

print("\n== /api/v1/timeseries (45079, in & out) ==")
print(get(f"/api/v1/timeseries?{base}&unit=45079&direction=in_and_out"))

print("\n== /api/v1/timeseries (45079, intraflow) ==")
print(get(f"/api/v1/timeseries?{base}&unit=45079&direction=intraflow"))

print("\n== /api/v1/export (daily) ==")
print(get(f"/api/v1/export?{base}"), end="")

print("\n== /api/v1/export (aggregated) ==")
print(get(f"/api/v1/export?{base}&aggregated=true"), end="")

server.should_exit = True
thread.join(timeout=5)
