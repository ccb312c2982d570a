"""Geographic units, spatial hierarchy, and geodesic primitives.

Units live in a :class:`UnitRegistry` keyed by (level, id).  U.S. levels nest
by FIPS prefix (state 2 / county 5 / tract 11 / block group 12 digits); other
hierarchies use an explicit parent mapping.  The registry is immutable once
loaded and safe for concurrent reads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional

from shapely import STRtree
from shapely.geometry import shape as shapely_shape
from shapely.geometry.base import BaseGeometry

from .errors import InvalidInput, InvalidLevelPair, UnknownUnit, UnsupportedLevel

EARTH_RADIUS_KM = 6371.0088  # IUGG mean radius


class GeoLevel(str, Enum):
    """Geographic levels ordered from coarsest to finest."""

    country = "country"
    subdivision1 = "subdivision1"
    state = "state"
    county = "county"
    tract = "tract"
    block_group = "block_group"

    @property
    def rank(self) -> int:
        return _LEVEL_RANK[self]

    @property
    def fips_length(self) -> Optional[int]:
        """Id length for U.S. FIPS levels, None for non-FIPS levels."""
        return _FIPS_LENGTH.get(self)

    def is_coarser_than(self, other: "GeoLevel") -> bool:
        return self.rank < other.rank

    def is_finer_than(self, other: "GeoLevel") -> bool:
        return self.rank > other.rank


_LEVEL_RANK = {
    GeoLevel.country: 0,
    GeoLevel.subdivision1: 1,
    GeoLevel.state: 2,
    GeoLevel.county: 3,
    GeoLevel.tract: 4,
    GeoLevel.block_group: 5,
}

_FIPS_LENGTH = {
    GeoLevel.state: 2,
    GeoLevel.county: 5,
    GeoLevel.tract: 11,
    GeoLevel.block_group: 12,
}


@dataclass(frozen=True)
class GeoPoint:
    """A WGS84 coordinate pair in degrees; ranges enforced at construction."""

    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not (-90.0 <= self.lat <= 90.0):
            raise InvalidInput(f"latitude out of range: {self.lat}")
        if not (-180.0 <= self.lon <= 180.0):
            raise InvalidInput(f"longitude out of range: {self.lon}")


@dataclass(frozen=True)
class GeoUnit:
    """One geographic unit: id, level, display name, centroid, optional polygons."""

    id: str
    level: GeoLevel
    name: str
    centroid: tuple[float, float]  # (lat, lon)
    geometry: Optional[BaseGeometry] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        expected = self.level.fips_length
        if expected is not None and len(self.id) != expected:
            raise InvalidInput(
                f"{self.level.value} id {self.id!r} must be {expected} characters"
            )


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in km on a sphere of radius ``EARTH_RADIUS_KM``."""
    lat1, lon1 = math.radians(a.lat), math.radians(a.lon)
    lat2, lon2 = math.radians(b.lat), math.radians(b.lon)
    sin_dlat = math.sin((lat2 - lat1) / 2.0)
    sin_dlon = math.sin((lon2 - lon1) / 2.0)
    h = sin_dlat * sin_dlat + math.cos(lat1) * math.cos(lat2) * sin_dlon * sin_dlon
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def mean_center(points: list[GeoPoint]) -> GeoPoint:
    """Planar arithmetic mean of latitudes and longitudes.

    Adequate for city-scale daily footprints; misbehaves for point sets
    straddling the antimeridian.
    """
    if not points:
        raise InvalidInput("mean_center of empty point list")
    n = len(points)
    return GeoPoint(
        lat=sum(p.lat for p in points) / n,
        lon=sum(p.lon for p in points) / n,
    )


class UnitRegistry:
    """Geographic units per level plus parent links between level pairs.

    Construction is single-threaded; after loading, all lookups are
    read-only.
    """

    def __init__(self) -> None:
        self._units: dict[GeoLevel, dict[str, GeoUnit]] = {}
        self._parents: dict[tuple[GeoLevel, GeoLevel], dict[str, str]] = {}
        self._trees: dict[GeoLevel, tuple[STRtree, list[GeoUnit]]] = {}

    def add(self, unit: GeoUnit) -> None:
        self._units.setdefault(unit.level, {})[unit.id] = unit
        self._trees.pop(unit.level, None)

    def add_parent_link(
        self, child_id: str, parent_id: str, child_level: GeoLevel, parent_level: GeoLevel
    ) -> None:
        if not parent_level.is_coarser_than(child_level):
            raise InvalidLevelPair(
                f"{parent_level.value} is not coarser than {child_level.value}"
            )
        self._parents.setdefault((child_level, parent_level), {})[child_id] = parent_id

    def levels(self) -> list[GeoLevel]:
        return sorted(self._units, key=lambda lv: lv.rank)

    def units_at(self, level: GeoLevel) -> dict[str, GeoUnit]:
        return self._units.get(level, {})

    def ids_at(self, level: GeoLevel) -> list[str]:
        return sorted(self._units.get(level, {}))

    def get(self, unit_id: str, level: GeoLevel) -> GeoUnit:
        try:
            return self._units[level][unit_id]
        except KeyError:
            raise UnknownUnit(f"no {level.value} unit {unit_id!r}") from None

    def has(self, unit_id: str, level: GeoLevel) -> bool:
        return unit_id in self._units.get(level, {})

    def _tree(self, level: GeoLevel) -> tuple[STRtree, list[GeoUnit]]:
        cached = self._trees.get(level)
        if cached is not None:
            return cached
        units = [u for u in self._units.get(level, {}).values() if u.geometry is not None]
        if not units:
            raise UnsupportedLevel(f"no geometry loaded for level {level.value}")
        units.sort(key=lambda u: u.id)
        tree = STRtree([u.geometry for u in units])
        self._trees[level] = (tree, units)
        return tree, units

    def resolve(self, point: GeoPoint, level: GeoLevel) -> Optional[GeoUnit]:
        """Unit whose polygon covers the point; smallest id wins on shared boundaries."""
        from shapely.geometry import Point as ShapelyPoint

        tree, units = self._tree(level)
        probe = ShapelyPoint(point.lon, point.lat)
        hits = [
            units[i]
            for i in tree.query(probe)
            if units[i].geometry.covers(probe)  # covers() keeps boundary points
        ]
        if not hits:
            return None
        return min(hits, key=lambda u: u.id)

    def parent_id(self, unit_id: str, from_level: GeoLevel, to_level: GeoLevel) -> str:
        if not to_level.is_coarser_than(from_level):
            raise InvalidLevelPair(
                f"{to_level.value} is not coarser than {from_level.value}"
            )
        if not self.has(unit_id, from_level):
            raise UnknownUnit(f"no {from_level.value} unit {unit_id!r}")
        from_len = from_level.fips_length
        to_len = to_level.fips_length
        if from_len is not None and to_len is not None:
            return unit_id[:to_len]
        mapping = self._parents.get((from_level, to_level), {})
        if unit_id not in mapping:
            raise UnknownUnit(
                f"no parent link {from_level.value}->{to_level.value} for {unit_id!r}"
            )
        return mapping[unit_id]


def resolve_unit(point: GeoPoint, level: GeoLevel, registry: UnitRegistry) -> Optional[GeoUnit]:
    """Point-in-polygon assignment of a coordinate to a unit, or None (e.g. open ocean)."""
    return registry.resolve(point, level)


def parent_unit(
    unit_id: str, from_level: GeoLevel, to_level: GeoLevel, registry: UnitRegistry
) -> str:
    """Ancestor id at a strictly coarser level (FIPS prefix or explicit mapping)."""
    return registry.parent_id(unit_id, from_level, to_level)


def load_geojson(source: str | Path | dict, registry: Optional[UnitRegistry] = None) -> UnitRegistry:
    """Load a GeoJSON FeatureCollection of units into a registry.

    Features need properties ``id``, ``level`` and ``name``.  The centroid is
    taken from an optional ``centroid`` property ([lat, lon]) or computed from
    the geometry.
    """
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            collection = json.load(fh)
    else:
        collection = source
    if collection.get("type") != "FeatureCollection":
        raise InvalidInput("expected a GeoJSON FeatureCollection")
    reg = registry if registry is not None else UnitRegistry()
    for feature in collection.get("features", []):
        props = feature.get("properties", {})
        try:
            level = GeoLevel(props["level"])
            unit_id = str(props["id"])
            name = str(props.get("name", unit_id))
        except (KeyError, ValueError) as exc:
            raise InvalidInput(f"bad feature properties: {props!r}") from exc
        geometry = None
        if feature.get("geometry"):
            geometry = shapely_shape(feature["geometry"])
        if "centroid" in props:
            lat, lon = props["centroid"]
            centroid = (float(lat), float(lon))
        elif geometry is not None:
            c = geometry.centroid
            centroid = (c.y, c.x)
        else:
            raise InvalidInput(f"feature {unit_id!r} has neither geometry nor centroid")
        reg.add(GeoUnit(id=unit_id, level=level, name=name, centroid=centroid, geometry=geometry))
    return reg


def load_parent_map(path: str | Path, registry: UnitRegistry) -> None:
    """Load explicit parent links from a plain-text file.

    One link per line: ``child_id,parent_id,child_level:parent_level``.
    Blank lines and ``#`` comments are skipped.
    """
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 3 or ":" not in parts[2]:
                raise InvalidInput(f"{path}:{lineno}: expected child,parent,from:to")
            child_id, parent_id, pair = (p.strip() for p in parts)
            from_name, to_name = pair.split(":", 1)
            registry.add_parent_link(
                child_id, parent_id, GeoLevel(from_name), GeoLevel(to_name)
            )
