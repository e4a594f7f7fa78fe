"""Linearly-referenced corridor geometry.

A corridor direction is a polyline of lat/lon vertices with cumulative
geodesic mileposts. Waypoints are projected onto each edge in a local
equirectangular plane, which is accurate for edges up to about a kilometre.
"""

import logging
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import TYPE_CHECKING, NamedTuple, Optional

import numpy as np

from .delimited import read_text
from .exceptions import (
    ConfigError,
    FileFormatError,
    InvalidCoordinateError,
    OutOfRangeError,
    TooFewVerticesError,
)

if TYPE_CHECKING:
    from .base import StrPath

logger = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_008.8
METERS_PER_MILE = 1609.344
DEFAULT_MAX_OFFSET_M = 50.0
DEFAULT_MAX_EDGE_M = 1000.0
# offsets closer than this are the same edge distance
EDGE_TIE_M = 1e-9
# ratios within this relative distance of an integer are exact
GRID_EPS = 1e-12


class Direction(str, Enum):
    EB = "EB"
    WB = "WB"


def check_coordinate(lat: float, lon: float, where: str = "") -> None:
    if not (
        math.isfinite(lat) and math.isfinite(lon) and -90 <= lat <= 90 and -180 <= lon <= 180
    ):
        raise InvalidCoordinateError(lat, lon, where)


def haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in metres on the mean Earth sphere."""
    phi1 = math.radians(lat1)
    phi2 = math.radians(lat2)
    dphi = math.radians(lat2 - lat1)
    dlambda = math.radians(lon2 - lon1)
    a = (
        math.sin(dphi / 2) ** 2
        + math.cos(phi1) * math.cos(phi2) * math.sin(dlambda / 2) ** 2
    )
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(a)))


def initial_bearing(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Initial great-circle bearing in degrees, [0, 360)."""
    phi1 = math.radians(lat1)
    phi2 = math.radians(lat2)
    dlambda = math.radians(lon2 - lon1)
    y = math.sin(dlambda) * math.cos(phi2)
    x = math.cos(phi1) * math.sin(phi2) - math.sin(phi1) * math.cos(phi2) * math.cos(
        dlambda
    )
    return math.degrees(math.atan2(y, x)) % 360.0


def grid_count(length: float, step: float) -> int:
    """Number of `step`-long bins covering `length`, at least one."""
    ratio = length / step
    nearest = round(ratio)
    if abs(ratio - nearest) <= GRID_EPS * max(1.0, abs(ratio)):
        return max(1, nearest)
    return max(1, math.ceil(ratio))


def angular_difference(a, b):
    """Smallest absolute difference between two headings, in [0, 180]."""
    diff = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) % 360.0
    return np.minimum(diff, 360.0 - diff)


@dataclass(frozen=True)
class RoutePolyline:
    direction: Direction
    vertices: tuple[tuple[float, float], ...]
    cumulative_mileposts: tuple[float, ...]

    @property
    def route_length(self) -> float:
        return self.cumulative_mileposts[-1]

    @cached_property
    def _edges(self) -> dict[str, np.ndarray]:
        coords = np.radians(np.asarray(self.vertices, dtype=float))
        lat0, lon0 = coords[:-1, 0], coords[:-1, 1]
        lat1, lon1 = coords[1:, 0], coords[1:, 1]
        coslat = np.cos((lat0 + lat1) / 2)
        cum = np.asarray(self.cumulative_mileposts, dtype=float)
        bearings = np.array(
            [
                initial_bearing(*self.vertices[i], *self.vertices[i + 1])
                for i in range(len(self.vertices) - 1)
            ]
        )
        return {
            "lat0": lat0,
            "lon0": lon0,
            "coslat": coslat,
            "ex": (lon1 - lon0) * coslat * EARTH_RADIUS_M,
            "ey": (lat1 - lat0) * EARTH_RADIUS_M,
            "start": cum[:-1],
            "length": np.diff(cum),
            "bearing": bearings,
        }

    def point_at(self, milepost: float) -> tuple[float, float]:
        """Lat/lon at `milepost`, interpolated linearly along its edge."""
        if not 0 <= milepost <= self.route_length:
            raise OutOfRangeError(milepost, self.route_length)
        cum = self.cumulative_mileposts
        i = int(np.searchsorted(cum, milepost, side="right")) - 1
        i = min(max(i, 0), len(cum) - 2)
        t = (milepost - cum[i]) / (cum[i + 1] - cum[i])
        (lat0, lon0), (lat1, lon1) = self.vertices[i], self.vertices[i + 1]
        return lat0 + t * (lat1 - lat0), lon0 + t * (lon1 - lon0)

    def reversed(self, direction: Direction) -> "RoutePolyline":
        return build_polyline(list(reversed(self.vertices)), direction)


@dataclass(frozen=True)
class SegmentGrid:
    route_length: float
    segment_length: float = 0.5

    def __post_init__(self):
        if not self.segment_length > 0:
            raise ConfigError("must be > 0", key="segment_length")

    @property
    def segment_count(self) -> int:
        return grid_count(self.route_length, self.segment_length)

    @classmethod
    def for_route(cls, polyline: RoutePolyline, segment_length: float = 0.5):
        return cls(polyline.route_length, segment_length)


@dataclass(frozen=True)
class MatchResult:
    segment_index: int
    milepost: float
    lateral_offset: float
    direction: Direction
    point: tuple[float, float]
    bearing: float


class Projection(NamedTuple):
    milepost: np.ndarray
    offset: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    bearing: np.ndarray


def build_polyline(
    vertices: Sequence[Sequence[float]], direction_label
) -> RoutePolyline:
    direction = Direction(direction_label)
    if len(vertices) < 2:
        raise TooFewVerticesError(direction.value, len(vertices))
    points = []
    for i, (lat, lon) in enumerate(vertices):
        check_coordinate(lat, lon, f"vertex {i}")
        points.append((float(lat), float(lon)))

    cumulative = [0.0]
    for (lat0, lon0), (lat1, lon1) in zip(points, points[1:]):
        step = haversine_m(lat0, lon0, lat1, lon1) / METERS_PER_MILE
        if step <= 0:
            raise InvalidCoordinateError(lat1, lon1, "repeats the previous vertex")
        cumulative.append(cumulative[-1] + step)

    return RoutePolyline(direction, tuple(points), tuple(cumulative))


def densify(
    polyline: RoutePolyline, max_edge_m: float = DEFAULT_MAX_EDGE_M
) -> RoutePolyline:
    """Split edges longer than `max_edge_m` by linear lat/lon interpolation."""
    points = [polyline.vertices[0]]
    for (lat0, lon0), (lat1, lon1) in zip(polyline.vertices, polyline.vertices[1:]):
        pieces = math.ceil(haversine_m(lat0, lon0, lat1, lon1) / max_edge_m)
        for j in range(1, pieces):
            f = j / pieces
            points.append((lat0 + f * (lat1 - lat0), lon0 + f * (lon1 - lon0)))
        points.append((lat1, lon1))
    if len(points) == len(polyline.vertices):
        return polyline
    return build_polyline(points, polyline.direction)


def project_many(lats, lons, polyline: RoutePolyline) -> Projection:
    """Project points onto `polyline`; ties go to the lower milepost."""
    lat = np.radians(np.asarray(lats, dtype=float))[:, None]
    lon = np.radians(np.asarray(lons, dtype=float))[:, None]
    e = polyline._edges

    px = (lon - e["lon0"]) * e["coslat"] * EARTH_RADIUS_M
    py = (lat - e["lat0"]) * EARTH_RADIUS_M
    t = np.clip((px * e["ex"] + py * e["ey"]) / (e["ex"] ** 2 + e["ey"] ** 2), 0, 1)
    offsets = np.hypot(px - t * e["ex"], py - t * e["ey"])

    best = offsets.min(axis=1, keepdims=True)
    idx = np.argmax(offsets <= best + EDGE_TIE_M, axis=1)
    rows = np.arange(len(idx))
    t_best = t[rows, idx]

    milepost = np.minimum(
        e["start"][idx] + t_best * e["length"][idx], polyline.route_length
    )
    vertices = np.asarray(polyline.vertices, dtype=float)
    start, end = vertices[idx], vertices[idx + 1]
    foot = start + t_best[:, None] * (end - start)
    return Projection(
        milepost, offsets[rows, idx], foot[:, 0], foot[:, 1], e["bearing"][idx]
    )


def segment_of(milepost: float, grid: SegmentGrid) -> int:
    if not 0 <= milepost <= grid.route_length:
        raise OutOfRangeError(milepost, grid.route_length)
    return min(math.floor(milepost / grid.segment_length), grid.segment_count - 1)


def project(
    point: Sequence[float],
    polyline: RoutePolyline,
    max_offset: float = DEFAULT_MAX_OFFSET_M,
    segment_length: float = 0.5,
) -> Optional[MatchResult]:
    """Nearest point on `polyline`, or None when the point is off-route."""
    lat, lon = point
    proj = project_many([lat], [lon], polyline)
    offset = float(proj.offset[0])
    if offset > max_offset:
        return None
    milepost = float(proj.milepost[0])
    grid = SegmentGrid.for_route(polyline, segment_length)
    return MatchResult(
        segment_index=segment_of(milepost, grid),
        milepost=milepost,
        lateral_offset=offset,
        direction=polyline.direction,
        point=(float(proj.lat[0]), float(proj.lon[0])),
        bearing=float(proj.bearing[0]),
    )


class MatchedArrays(NamedTuple):
    """Per-point match; `direction_index` is -1 for off-route points."""

    direction_index: np.ndarray
    milepost: np.ndarray
    segment: np.ndarray
    offset: np.ndarray


class RouteMatcher:
    """Assign waypoints to one of several directed polylines.

    The smaller lateral offset wins. Offsets within `tie_m` of each other
    are decided by heading agreement (within 90 degrees of the edge
    bearing), then by the smaller offset, then by direction order.
    """

    # heading disagreement outweighs any admissible offset
    DISAGREE_PENALTY = 1e9

    def __init__(
        self,
        polylines: Mapping[Direction, RoutePolyline],
        segment_length: float = 0.5,
        max_offset: float = DEFAULT_MAX_OFFSET_M,
        tie_m: float = 0.5,
    ):
        self.directions = sorted(polylines, key=lambda d: d.value)
        self.polylines = [polylines[d] for d in self.directions]
        self.grids = [SegmentGrid.for_route(p, segment_length) for p in self.polylines]
        self.max_offset = max_offset
        self.tie_m = tie_m

    def match_many(self, lats, lons, headings) -> MatchedArrays:
        lats = np.asarray(lats, dtype=float)
        n = len(lats)
        if n == 0:
            empty = np.empty(0)
            return MatchedArrays(np.empty(0, dtype=int), empty, np.empty(0, dtype=int), empty)

        projections = [project_many(lats, lons, p) for p in self.polylines]
        offsets = np.stack([p.offset for p in projections], axis=1)
        mileposts = np.stack([p.milepost for p in projections], axis=1)
        agree = np.stack(
            [angular_difference(headings, p.bearing) <= 90.0 for p in projections],
            axis=1,
        )

        best = offsets.min(axis=1, keepdims=True)
        candidate = (offsets <= best + self.tie_m) & (offsets <= self.max_offset)
        key = np.where(
            candidate, offsets + np.where(agree, 0.0, self.DISAGREE_PENALTY), np.inf
        )
        choice = np.argmin(key, axis=1)
        rows = np.arange(n)
        on_route = np.isfinite(key[rows, choice])

        milepost = mileposts[rows, choice]
        segment = np.zeros(n, dtype=int)
        for d, grid in enumerate(self.grids):
            mask = choice == d
            segment[mask] = np.minimum(
                np.floor(milepost[mask] / grid.segment_length).astype(int),
                grid.segment_count - 1,
            )
        return MatchedArrays(
            np.where(on_route, choice, -1), milepost, segment, offsets[rows, choice]
        )

    def match(self, point: Sequence[float], heading: float) -> Optional[MatchResult]:
        lat, lon = point
        result = self.match_many([lat], [lon], [heading])
        d = int(result.direction_index[0])
        if d < 0:
            return None
        proj = project_many([lat], [lon], self.polylines[d])
        return MatchResult(
            segment_index=int(result.segment[0]),
            milepost=float(result.milepost[0]),
            lateral_offset=float(result.offset[0]),
            direction=self.directions[d],
            point=(float(proj.lat[0]), float(proj.lon[0])),
            bearing=float(proj.bearing[0]),
        )


def match_direction(
    point: Sequence[float],
    heading: float,
    polylines: Mapping[Direction, RoutePolyline],
    max_offset: float = DEFAULT_MAX_OFFSET_M,
    tie_m: float = 0.5,
    segment_length: float = 0.5,
) -> Optional[MatchResult]:
    """Match one waypoint against every direction; see `RouteMatcher`."""
    matcher = RouteMatcher(polylines, segment_length, max_offset, tie_m)
    return matcher.match(point, heading)


def load_route(
    path: "StrPath", max_edge_m: Optional[float] = DEFAULT_MAX_EDGE_M
) -> dict[Direction, RoutePolyline]:
    """Read a `direction,lat,lon` vertex table, one polyline per direction."""
    vertices: dict[Direction, list[tuple[float, float]]] = {}
    for lineno, raw in enumerate(read_text(path).splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.lower() == "direction,lat,lon":
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != 3:
            raise FileFormatError(path, lineno, f"expected 3 fields, got {len(fields)}")
        try:
            direction = Direction(fields[0])
            lat, lon = float(fields[1]), float(fields[2])
        except ValueError as exc:
            raise FileFormatError(path, lineno, str(exc)) from exc
        check_coordinate(lat, lon, f"{path}:{lineno}")
        vertices.setdefault(direction, []).append((lat, lon))

    if not vertices:
        raise FileFormatError(path, 0, "no route vertices")
    polylines = {}
    for direction, points in vertices.items():
        polyline = build_polyline(points, direction)
        if max_edge_m:
            polyline = densify(polyline, max_edge_m)
        logger.debug(
            "route %s: %d vertices, %.3f mi",
            direction.value,
            len(polyline.vertices),
            polyline.route_length,
        )
        polylines[direction] = polyline
    return polylines


def write_route(polylines: Iterable[RoutePolyline], path: "StrPath") -> None:
    lines = ["direction,lat,lon"]
    for polyline in polylines:
        lines.extend(
            f"{polyline.direction.value},{lat!r},{lon!r}" for lat, lon in polyline.vertices
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
