"""HTTP query and export service over loaded cubes.

Handlers are stateless over a shared :class:`CubeStore`; a rebuilt cube set
is swapped in atomically (single reference assignment) and serves subsequent
requests.  Identical queries against an unchanged store produce
byte-identical bodies: every collection is emitted in a fixed sort order and
JSON is serialized explicitly.
"""

from __future__ import annotations

import datetime as dt
import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import Response, StreamingResponse

from .cube import Bbox, Dataset, Direction, OdtCube, Period, check_bbox, check_period
from .errors import InvalidInput, InvalidPeriod, UnknownUnit, UnsupportedDirection
from .geo import GeoLevel

CUBE_FILE_SUFFIX = ".odtcube"
BOUNDARIES_FILENAME = "boundaries.geojson"

DEFAULT_MIN_COUNTS = {Dataset.twitter: 0, Dataset.safegraph: 20}


@dataclass(frozen=True)
class QuerySpec:
    """One validated query against a (dataset, level) cube."""

    dataset: Dataset
    level: GeoLevel
    start: dt.date
    end: dt.date
    unit_id: Optional[str] = None
    direction: Optional[Direction] = None
    bbox: Optional[Bbox] = None
    threshold: Optional[int] = None
    aggregated: bool = False

    def __post_init__(self) -> None:
        check_period((self.start, self.end))
        if self.bbox is not None:
            check_bbox(self.bbox)
        if self.threshold is not None and self.threshold < 0:
            raise InvalidInput(f"threshold must be non-negative, got {self.threshold}")

    @property
    def period(self) -> Period:
        return (self.start, self.end)

    @classmethod
    def from_mapping(cls, raw: dict) -> "QuerySpec":
        """Build from a plain dict (the offline export spec file)."""
        bbox = raw.get("bbox")
        if isinstance(bbox, str):
            bbox = [float(part) for part in bbox.split(",")]
        if bbox is not None:
            if len(bbox) != 4:
                raise InvalidInput("bbox must be [min_lon, min_lat, max_lon, max_lat]")
            bbox = tuple(float(part) for part in bbox)
        direction = raw.get("direction")
        return cls(
            dataset=Dataset(raw["dataset"]),
            level=GeoLevel(raw["level"]),
            start=dt.date.fromisoformat(raw["start"]),
            end=dt.date.fromisoformat(raw["end"]),
            unit_id=raw.get("unit"),
            direction=Direction(direction) if direction else None,
            bbox=bbox,
            threshold=raw.get("min_count"),
            aggregated=bool(raw.get("aggregated", False)),
        )


@dataclass(frozen=True)
class ServiceConfig:
    """Runtime settings; defaults, then config file, then environment, then flags."""

    data_dir: Optional[Path] = None
    port: int = 8645
    row_cap: int = 5_000_000
    min_counts: dict[Dataset, int] = field(default_factory=lambda: dict(DEFAULT_MIN_COUNTS))
    cors_origins: tuple[str, ...] = ("*",)

    @classmethod
    def load(
        cls,
        config_file: Optional[str | Path] = None,
        env: Optional[dict[str, str]] = None,
        **overrides,
    ) -> "ServiceConfig":
        env = dict(os.environ) if env is None else env
        cfg = cls()
        if config_file is not None:
            with open(config_file, encoding="utf-8") as fh:
                raw = json.load(fh)
            cfg = cfg._apply(raw)
        env_raw: dict = {}
        if "ODCUBE_DATA_DIR" in env:
            env_raw["data_dir"] = env["ODCUBE_DATA_DIR"]
        if "ODCUBE_PORT" in env:
            env_raw["port"] = int(env["ODCUBE_PORT"])
        if "ODCUBE_ROW_CAP" in env:
            env_raw["row_cap"] = int(env["ODCUBE_ROW_CAP"])
        if "ODCUBE_CORS_ORIGINS" in env:
            env_raw["cors_origins"] = [s for s in env["ODCUBE_CORS_ORIGINS"].split(",") if s]
        min_counts = {
            name: int(env[f"ODCUBE_MIN_COUNT_{name.upper()}"])
            for name in (d.value for d in Dataset)
            if f"ODCUBE_MIN_COUNT_{name.upper()}" in env
        }
        if min_counts:
            env_raw["min_counts"] = min_counts
        cfg = cfg._apply(env_raw)
        return cfg._apply({k: v for k, v in overrides.items() if v is not None})

    def _apply(self, raw: dict) -> "ServiceConfig":
        updates = {}
        if "data_dir" in raw and raw["data_dir"] is not None:
            updates["data_dir"] = Path(raw["data_dir"])
        if "port" in raw:
            updates["port"] = int(raw["port"])
        if "row_cap" in raw:
            updates["row_cap"] = int(raw["row_cap"])
        if "cors_origins" in raw:
            updates["cors_origins"] = tuple(raw["cors_origins"])
        if "min_counts" in raw:
            merged = dict(self.min_counts)
            for name, value in raw["min_counts"].items():
                merged[Dataset(name)] = int(value)
            updates["min_counts"] = merged
        return replace(self, **updates)


class CubeStore:
    """Immutable snapshot of loaded cubes keyed by (dataset, level)."""

    def __init__(self, cubes: Optional[dict[tuple[Dataset, GeoLevel], OdtCube]] = None) -> None:
        self._cubes = dict(cubes or {})

    def swap(self, cubes: dict[tuple[Dataset, GeoLevel], OdtCube]) -> None:
        # single reference assignment: readers see either the old or new snapshot
        self._cubes = dict(cubes)

    def get(self, dataset: Dataset, level: GeoLevel) -> OdtCube:
        try:
            return self._cubes[(dataset, level)]
        except KeyError:
            raise UnknownUnit(f"no cube for dataset={dataset.value} level={level.value}") from None

    def keys(self) -> list[tuple[Dataset, GeoLevel]]:
        return sorted(self._cubes, key=lambda k: (k[0].value, k[1].rank))

    def __len__(self) -> int:
        return len(self._cubes)


def load_cubes(data_dir: str | Path) -> CubeStore:
    """Load every ``*.odtcube`` file under a directory into a store."""
    cubes: dict[tuple[Dataset, GeoLevel], OdtCube] = {}
    for path in sorted(Path(data_dir).glob(f"*{CUBE_FILE_SUFFIX}")):
        cube = OdtCube.read(path)
        cubes[(cube.dataset, cube.level)] = cube
    return CubeStore(cubes)


def load_boundaries(data_dir: str | Path) -> Optional[bytes]:
    """Raw bytes of the boundary file shipped alongside the cubes, if any."""
    path = Path(data_dir) / BOUNDARIES_FILENAME
    if path.is_file():
        return path.read_bytes()
    return None


def cube_filename(dataset: Dataset, level: GeoLevel) -> str:
    return f"{dataset.value}_{level.value}{CUBE_FILE_SUFFIX}"


# -- request parsing ---------------------------------------------------------


def _bad(message: str) -> HTTPException:
    return HTTPException(status_code=400, detail=message)


def _parse_date(value: Optional[str], name: str) -> dt.date:
    if not value:
        raise _bad(f"missing parameter {name!r}")
    try:
        return dt.date.fromisoformat(value)
    except ValueError:
        raise _bad(f"{name} must be an ISO date (YYYY-MM-DD), got {value!r}") from None


def _parse_direction(value: Optional[str]) -> Direction:
    if not value:
        raise _bad("missing parameter 'direction'")
    try:
        return Direction(value)
    except ValueError:
        choices = ", ".join(d.value for d in Direction)
        raise _bad(f"direction must be one of {choices}, got {value!r}") from None

def _parse_bbox(value: Optional[str]) -> Optional[Bbox]:
    if value is None or value == "":
        return None
    parts = value.split(",")
    if len(parts) != 4:
        raise _bad("bbox must be 'min_lon,min_lat,max_lon,max_lat'")
    try:
        bbox = tuple(float(p) for p in parts)
    except ValueError:
        raise _bad(f"bbox must be numeric, got {value!r}") from None
    if bbox[0] > bbox[2] or bbox[1] > bbox[3]:
        raise _bad(f"bbox not well-ordered: {value!r}")
    return bbox  # type: ignore[return-value]


def _parse_bool(value: Optional[str], name: str, default: bool = False) -> bool:
    if value is None or value == "":
        return default
    lowered = value.lower()
    if lowered in ("true", "1"):
        return True
    if lowered in ("false", "0"):
        return False
    raise _bad(f"{name} must be true or false, got {value!r}")


def _parse_int(value: Optional[str], name: str) -> Optional[int]:
    if value is None or value == "":
        return None
    try:
        parsed = int(value)
    except ValueError:
        raise _bad(f"{name} must be an integer, got {value!r}") from None
    if parsed < 0:
        raise _bad(f"{name} must be non-negative, got {value!r}")
    return parsed


def _spec_or_400(cube: OdtCube, **kwargs) -> QuerySpec:
    try:
        return QuerySpec(dataset=cube.dataset, level=cube.level, **kwargs)
    except (InvalidInput, InvalidPeriod) as exc:
        raise _bad(str(exc)) from None


def _lookup_cube(store: CubeStore, dataset: Optional[str], level: Optional[str]) -> OdtCube:
    if not dataset:
        raise _bad("missing parameter 'dataset'")
    if not level:
        raise _bad("missing parameter 'level'")
    try:
        ds = Dataset(dataset)
    except ValueError:
        raise HTTPException(status_code=404, detail=f"unknown dataset {dataset!r}") from None
    try:
        lv = GeoLevel(level)
    except ValueError:
        raise HTTPException(status_code=404, detail=f"unknown level {level!r}") from None
    try:
        return store.get(ds, lv)
    except UnknownUnit:
        raise HTTPException(
            status_code=404, detail=f"no cube loaded for dataset={dataset} level={level}"
        ) from None


def _json_response(payload) -> Response:
    return Response(
        content=json.dumps(payload, separators=(",", ":")),
        media_type="application/json",
    )


# -- application -------------------------------------------------------------


def create_app(
    store: CubeStore,
    config: Optional[ServiceConfig] = None,
    boundaries: Optional[bytes] = None,
) -> FastAPI:
    config = config if config is not None else ServiceConfig()
    app = FastAPI(title="odcube", docs_url=None, redoc_url=None)
    app.state.store = store
    app.state.config = config
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(config.cors_origins),
        allow_methods=["GET"],
        allow_headers=["*"],
    )

    @app.get("/api/v1/meta")
    def meta() -> Response:
        datasets: dict[str, list[dict]] = {}
        for ds, lv in store.keys():
            cube = store.get(ds, lv)
            date_range = cube.date_range
            datasets.setdefault(ds.value, []).append(
                {
                    "level": lv.value,
                    "start": date_range[0].isoformat() if date_range else None,
                    "end": date_range[1].isoformat() if date_range else None,
                }
            )
        payload = {
            "datasets": [
                {"name": name, "levels": levels} for name, levels in sorted(datasets.items())
            ]
        }
        return _json_response(payload)

    @app.get("/api/v1/boundaries")
    def get_boundaries() -> Response:
        # the same GeoJSON the build step used, for explorer map rendering
        if boundaries is None:
            raise HTTPException(status_code=404, detail="no boundary file loaded")
        return Response(content=boundaries, media_type="application/geo+json")

    @app.get("/api/v1/choropleth")
    def choropleth(
        dataset: Optional[str] = None,
        level: Optional[str] = None,
        unit: Optional[str] = None,
        start: Optional[str] = None,
        end: Optional[str] = None,
        direction: Optional[str] = None,
    ) -> Response:
        cube = _lookup_cube(store, dataset, level)
        if not unit:
            raise _bad("missing parameter 'unit'")
        spec = _spec_or_400(
            cube,
            start=_parse_date(start, "start"),
            end=_parse_date(end, "end"),
            unit_id=unit,
            direction=_parse_direction(direction),
        )
        try:
            vector = cube.choropleth(spec.unit_id, spec.period, spec.direction)
        except UnsupportedDirection as exc:
            raise _bad(str(exc)) from None
        except UnknownUnit as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None
        return _json_response({k: vector.values[k] for k in sorted(vector.values)})

    @app.get("/api/v1/flows")
    def flows(
        dataset: Optional[str] = None,
        level: Optional[str] = None,
        start: Optional[str] = None,
        end: Optional[str] = None,
        direction: Optional[str] = None,
        bbox: Optional[str] = None,
        min_count: Optional[str] = None,
    ) -> Response:
        cube = _lookup_cube(store, dataset, level)
        spec = _spec_or_400(
            cube,
            start=_parse_date(start, "start"),
            end=_parse_date(end, "end"),
            direction=_parse_direction(direction) if direction else Direction.in_and_out,
            bbox=_parse_bbox(bbox),
            threshold=_parse_int(min_count, "min_count"),
        )
        threshold = spec.threshold
        if threshold is None:
            threshold = config.min_counts.get(cube.dataset, 0)
        try:
            lines = cube.od_matrix(
                spec.period, aoi=spec.bbox, direction=spec.direction, threshold=threshold
            )
        except UnsupportedDirection as exc:
            raise _bad(str(exc)) from None
        payload = [
            {
                "origin": line.origin_id,
                "origin_lat": line.origin_centroid[0],
                "origin_lon": line.origin_centroid[1],
                "destination": line.destination_id,
                "destination_lat": line.destination_centroid[0],
                "destination_lon": line.destination_centroid[1],
                "count": line.count,
            }
            for line in lines.lines
        ]
        return _json_response(payload)

    @app.get("/api/v1/timeseries")
    def timeseries(
        dataset: Optional[str] = None,
        level: Optional[str] = None,
        unit: Optional[str] = None,
        start: Optional[str] = None,
        end: Optional[str] = None,
        direction: Optional[str] = None,
    ) -> Response:
        cube = _lookup_cube(store, dataset, level)
        if not unit:
            raise _bad("missing parameter 'unit'")
        spec = _spec_or_400(
            cube,
            start=_parse_date(start, "start"),
            end=_parse_date(end, "end"),
            unit_id=unit,
            direction=_parse_direction(direction),
        )
        try:
            series = cube.daily_series(spec.unit_id, spec.period, spec.direction)
        except UnknownUnit as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None
        payload = [
            {"date": day.isoformat(), "count": count}
            for day, count in zip(series.days, series.counts)
        ]
        return _json_response(payload)

    @app.get("/api/v1/export")
    def export(
        dataset: Optional[str] = None,
        level: Optional[str] = None,
        start: Optional[str] = None,
        end: Optional[str] = None,
        bbox: Optional[str] = None,
        aggregated: Optional[str] = None,
    ) -> Response:
        cube = _lookup_cube(store, dataset, level)
        spec = _spec_or_400(
            cube,
            start=_parse_date(start, "start"),
            end=_parse_date(end, "end"),
            bbox=_parse_bbox(bbox),
            aggregated=_parse_bool(aggregated, "aggregated"),
        )
        rows = cube.export_row_count(spec.period, spec.bbox, spec.aggregated)
        if rows > config.row_cap:
            raise HTTPException(
                status_code=413,
                detail=(
                    f"export of {rows} rows exceeds the cap of {config.row_cap}; "
                    "narrow the period or bbox, or set aggregated=true"
                ),
            )
        filename = f"{cube.dataset.value}_{cube.level.value}_{spec.start}_{spec.end}.csv"
        return StreamingResponse(
            cube.export_csv_chunks(spec.period, bbox=spec.bbox, aggregated=spec.aggregated),
            media_type="text/csv",
            headers={"Content-Disposition": f'attachment; filename="{filename}"'},
        )

    return app
