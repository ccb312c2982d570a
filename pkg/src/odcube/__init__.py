"""Origin-destination-time cube engine for daily human-mobility flows.

Extracts OD flow records from geotagged event streams and social-distancing
tables, aggregates them into day-partitioned sparse cubes with multi-level
geographic rollups, and serves choropleth / flow-map / time-series / CSV
export queries over HTTP.
"""

from .cube import (
    AuditReport,
    Bbox,
    BuildReport,
    ChoroplethVector,
    Dataset,
    Direction,
    FlowLine,
    FlowLineSet,
    OdtCube,
    Period,
    TimeSeries,
    build_cube,
)
from .errors import (
    InvalidInput,
    InvalidLevelPair,
    InvalidPeriod,
    MalformedDate,
    MalformedDestinationMap,
    MalformedSdmRow,
    MixedDataset,
    OdcubeError,
    UnknownUnit,
    UnsupportedDirection,
    UnsupportedLevel,
)
from .extract import (
    FilterConfig,
    FlowKind,
    FlowRecord,
    GeoEvent,
    Resolution,
    SdmRow,
    explode_sdm_row,
    extract_cross_day,
    extract_single_day,
    extract_user_flows,
    filter_events,
    parse_destination_cbgs,
)
from .geo import (
    GeoLevel,
    GeoPoint,
    GeoUnit,
    UnitRegistry,
    haversine_km,
    load_geojson,
    load_parent_map,
    mean_center,
    parent_unit,
    resolve_unit,
)

__version__ = "0.1.0"

__all__ = [
    "AuditReport",
    "Bbox",
    "BuildReport",
    "ChoroplethVector",
    "Dataset",
    "Direction",
    "FilterConfig",
    "FlowKind",
    "FlowLine",
    "FlowLineSet",
    "FlowRecord",
    "GeoEvent",
    "GeoLevel",
    "GeoPoint",
    "GeoUnit",
    "InvalidInput",
    "InvalidLevelPair",
    "InvalidPeriod",
    "MalformedDate",
    "MalformedDestinationMap",
    "MalformedSdmRow",
    "MixedDataset",
    "OdcubeError",
    "OdtCube",
    "Period",
    "Resolution",
    "SdmRow",
    "TimeSeries",
    "UnitRegistry",
    "UnknownUnit",
    "UnsupportedDirection",
    "UnsupportedLevel",
    "build_cube",
    "explode_sdm_row",
    "extract_cross_day",
    "extract_single_day",
    "extract_user_flows",
    "filter_events",
    "haversine_km",
    "load_geojson",
    "load_parent_map",
    "mean_center",
    "parent_unit",
    "resolve_unit",
]
