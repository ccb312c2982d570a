"""Operator entry points: ingest raw inputs, build cubes, serve, export.

Exit codes: 0 success, 1 runtime failure, 2 usage error.  Stats reports are
JSON (written next to the outputs and echoed to stdout) so they can be parsed
instead of scraped.
"""

from __future__ import annotations

import itertools
import json
from pathlib import Path
from typing import Iterator, Optional

import click

from . import api as api_mod
from .api import QuerySpec, ServiceConfig, cube_filename, load_cubes
from .cube import Dataset, build_cube
from .errors import OdcubeError
from .extract import (
    FilterConfig,
    FilterStats,
    FlowKind,
    FlowRecord,
    SdmStats,
    explode_sdm_rows,
    extract_user_flows,
    read_events,
    read_records,
    read_sdm_csv,
    write_records,
    write_records_csv,
)
from .geo import GeoLevel, UnitRegistry, load_geojson

RECORDS_FILENAME = "records.ndjson"
STATS_FILENAME = "stats.json"


def _fail(message: str) -> "click.ClickException":
    exc = click.ClickException(message)
    exc.exit_code = 1
    return exc


def _write_stats(out_dir: Path, stats: dict) -> None:
    text = json.dumps(stats, indent=2, sort_keys=True)
    (out_dir / STATS_FILENAME).write_text(text + "\n", encoding="utf-8")
    click.echo(text)


def _input_files(path: Path, patterns: tuple[str, ...]) -> list[Path]:
    if path.is_dir():
        files = sorted(p for pattern in patterns for p in path.glob(pattern))
        if not files:
            raise _fail(f"no input files matching {patterns} under {path}")
        return files
    return [path]


def _load_registry(geo_path: Path) -> UnitRegistry:
    try:
        return load_geojson(geo_path)
    except (OSError, json.JSONDecodeError, OdcubeError) as exc:
        raise _fail(f"cannot load boundaries from {geo_path}: {exc}")


@click.group()
def main() -> None:
    """Origin-destination-time cube toolkit."""


@main.command("ingest-events")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--geo", "geo_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--bots", "bots_path", type=click.Path(exists=True, path_type=Path))
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--csv", "csv_dump", is_flag=True, help="Also write a flat records.csv dump.")
def ingest_events(
    input_path: Path, geo_path: Path, bots_path: Optional[Path], out_dir: Path, csv_dump: bool
) -> None:
    """Extract single-day and cross-day flow records from geotagged events."""
    _load_registry(geo_path)  # validates the boundary file the build step will use
    cfg = FilterConfig()
    if bots_path is not None:
        sources = {
            line.strip() for line in bots_path.read_text(encoding="utf-8").splitlines() if line.strip()
        }
        if not sources:
            raise _fail(f"bot list {bots_path} is empty")
        cfg = FilterConfig(bot_sources=frozenset(sources))

    by_user: dict[str, list] = {}
    events_read = 0
    try:
        for path in _input_files(input_path, ("*.csv", "*.ndjson", "*.jsonl", "*.json")):
            for event in read_events(path):
                events_read += 1
                by_user.setdefault(event.user_id, []).append(event)
    except (OSError, OdcubeError) as exc:
        raise _fail(f"cannot read events: {exc}")

    out_dir.mkdir(parents=True, exist_ok=True)
    filter_stats = FilterStats()
    flows_by_kind = {FlowKind.single_day: 0, FlowKind.cross_day: 0}

    def records() -> Iterator[FlowRecord]:
        for user_id in sorted(by_user):
            for record in extract_user_flows(by_user[user_id], cfg, filter_stats=filter_stats):
                flows_by_kind[record.kind] += 1
                yield record

    written = write_records(records(), out_dir / RECORDS_FILENAME)
    if csv_dump:
        write_records_csv(read_records(out_dir / RECORDS_FILENAME), out_dir / "records.csv")
    _write_stats(
        out_dir,
        {
            "events_read": events_read,
            "dropped_bot": filter_stats.dropped_bot,
            "dropped_resolution": filter_stats.dropped_resolution,
            "users": len(by_user),
            "flows_single_day": flows_by_kind[FlowKind.single_day],
            "flows_cross_day": flows_by_kind[FlowKind.cross_day],
            "records_written": written,
        },
    )


@main.command("ingest-sdm")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--csv", "csv_dump", is_flag=True, help="Also write a flat records.csv dump.")
def ingest_sdm(input_path: Path, out_dir: Path, csv_dump: bool) -> None:
    """Explode social-distancing rows into block-group flow records."""
    out_dir.mkdir(parents=True, exist_ok=True)
    stats = SdmStats()
    try:
        rows = itertools.chain.from_iterable(
            read_sdm_csv(path) for path in _input_files(input_path, ("*.csv",))
        )
        written = write_records(explode_sdm_rows(rows, stats), out_dir / RECORDS_FILENAME)
    except (OSError, OdcubeError) as exc:
        raise _fail(f"cannot read SDM input: {exc}")
    if csv_dump:
        write_records_csv(read_records(out_dir / RECORDS_FILENAME), out_dir / "records.csv")
    _write_stats(
        out_dir,
        {
            "rows_read": stats.rows_read,
            "rows_malformed": stats.rows_malformed,
            "records_written": written,
            "total_count": stats.total_count,
        },
    )


def _parse_levels(value: str) -> list[GeoLevel]:
    levels = []
    for name in value.split(","):
        name = name.strip()
        if not name:
            continue
        try:
            levels.append(GeoLevel(name))
        except ValueError:
            valid = ", ".join(lv.value for lv in GeoLevel)
            raise click.UsageError(f"unknown level {name!r}; valid levels: {valid}")
    if not levels:
        raise click.UsageError("--levels must name at least one level")
    return levels


@main.command("build")
@click.option("--records", "records_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--dataset", required=True, type=click.Choice([d.value for d in Dataset]))
@click.option("--levels", required=True, help="Comma-separated level names, e.g. state,county")
@click.option("--geo", "geo_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
def build(records_path: Path, dataset: str, levels: str, geo_path: Path, out_dir: Path) -> None:
    """Build one cube file per requested level from record batches."""
    level_list = _parse_levels(levels)
    registry = _load_registry(geo_path)
    record_files = _input_files(records_path, ("*.ndjson",))
    out_dir.mkdir(parents=True, exist_ok=True)

    summary = {"dataset": dataset, "levels": {}}
    failed = False
    for level in level_list:
        try:
            records = itertools.chain.from_iterable(read_records(f) for f in record_files)
            cube = build_cube(records, level, registry, dataset=Dataset(dataset))
        except (OSError, OdcubeError) as exc:
            raise _fail(f"build failed at level {level.value}: {exc}")
        cube.write(out_dir / cube_filename(cube.dataset, level))
        audit = cube.audit()
        date_range = cube.date_range
        summary["levels"][level.value] = {
            "file": cube_filename(cube.dataset, level),
            "triples": cube.n_triples,
            "total_count": cube.total_count(),
            "date_range": [d.isoformat() for d in date_range] if date_range else None,
            "build_report": cube.build_report.as_dict() if cube.build_report else None,
            "audit_mismatches": len(audit.mismatches),
        }
        if not audit.ok:
            failed = True
    click.echo(json.dumps(summary, indent=2, sort_keys=True))
    if failed:
        raise _fail("audit found marginal mismatches")


@main.command("serve")
@click.option("--data-dir", "data_dir", type=click.Path(exists=True, path_type=Path))
@click.option("--port", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path))
def serve(data_dir: Optional[Path], port: Optional[int], config_path: Optional[Path]) -> None:
    """Load all cubes under the data directory and serve the query API."""
    import uvicorn

    config = ServiceConfig.load(config_file=config_path, data_dir=data_dir, port=port)
    if config.data_dir is None:
        raise click.UsageError("--data-dir (or config/ODCUBE_DATA_DIR) is required")
    store = load_cubes(config.data_dir)
    boundaries = api_mod.load_boundaries(config.data_dir)
    app = api_mod.create_app(store, config, boundaries=boundaries)
    click.echo(f"serving {len(store)} cube(s) from {config.data_dir} on port {config.port}")
    uvicorn.run(app, host="127.0.0.1", port=config.port, log_level="warning")


@main.command("export")
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--data-dir", "data_dir", type=click.Path(exists=True, path_type=Path))
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path))
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path))
def export(
    spec_path: Path, data_dir: Optional[Path], out_path: Path, config_path: Optional[Path]
) -> None:
    """Offline twin of GET /api/v1/export: writes the identical CSV to a file."""
    config = ServiceConfig.load(config_file=config_path, data_dir=data_dir)
    if config.data_dir is None:
        raise click.UsageError("--data-dir (or config/ODCUBE_DATA_DIR) is required")
    try:
        raw = json.loads(spec_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise _fail(f"cannot read export spec {spec_path}: {exc}")
    try:
        spec = QuerySpec.from_mapping(raw)
    except (KeyError, ValueError, OdcubeError) as exc:
        raise _fail(f"bad export spec: {exc}")

    store = load_cubes(config.data_dir)
    try:
        cube = store.get(spec.dataset, spec.level)
    except OdcubeError as exc:
        raise _fail(str(exc))
    rows = cube.export_row_count(spec.period, spec.bbox, spec.aggregated)
    if rows > config.row_cap:
        raise _fail(
            f"export of {rows} rows exceeds the cap of {config.row_cap}; "
            "narrow the period or bbox, or set aggregated=true"
        )
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        for chunk in cube.export_csv_chunks(spec.period, bbox=spec.bbox, aggregated=spec.aggregated):
            fh.write(chunk)
    click.echo(json.dumps({"rows": rows, "out": str(out_path)}))


if __name__ == "__main__":
    main()
