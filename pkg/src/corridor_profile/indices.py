"""Safety, comfort and stability indices over finalized cells."""

import logging
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, fields
from typing import TYPE_CHECKING, Optional

from .aggregate import (
    METRIC_COLUMNS,
    CellKey,
    CellMetrics,
    CellValues,
    GridParams,
    read_cell_values,
)
from .delimited import parse_field, read_table, write_table
from .exceptions import (
    ConfigError,
    FileFormatError,
    MissingSpeedLimitError,
    ZeroMeanSpeedError,
)
from .route import Direction

if TYPE_CHECKING:
    from .base import StrPath

logger = logging.getLogger(__name__)

INDEX_COLUMNS = ["safety_index", "comfort_index", "stability_index"]
NORMALIZED_STABILITY_COLUMN = "stability_per_waypoint"
LIMIT_COLUMNS = ["direction", "milepost_start", "milepost_end", "limit_mps"]


@dataclass(frozen=True)
class IndexWeights:
    w_vc: float = 1.0
    w_vr: float = 1.0
    w_hc: float = 1.0
    w_pb: float = 1.0
    w_pj: float = 1.0
    w_na: float = 1.0
    w_nb: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ConfigError("weights must be >= 0", key=f.name)

    def scaled(self, factor: float) -> "IndexWeights":
        return IndexWeights(**{f.name: getattr(self, f.name) * factor for f in fields(self)})


@dataclass(frozen=True)
class SpeedLimitMap:
    """Posted limits as ordered (milepost_start, milepost_end, limit) runs."""

    limits: Mapping[Direction, Sequence[tuple[float, float, float]]]

    def __post_init__(self):
        for direction, runs in self.limits.items():
            previous_end = None
            for start, end, limit in runs:
                if not limit > 0:
                    raise ConfigError(f"{direction.value} limit must be > 0", key="limit_mps")
                if not start < end:
                    raise ConfigError(
                        f"{direction.value} run [{start}, {end}] is empty", key="milepost_end"
                    )
                if previous_end is not None and start < previous_end:
                    raise ConfigError(
                        f"{direction.value} runs overlap at milepost {start}",
                        key="milepost_start",
                    )
                previous_end = end

    @classmethod
    def uniform(cls, limit: float, directions: Iterable[Direction] = tuple(Direction)):
        return cls({d: [(0.0, float("inf"), limit)] for d in directions})

    def limit_at(self, direction: Direction, milepost: float) -> Optional[float]:
        runs = self.limits.get(direction, ())
        for i, (start, end, limit) in enumerate(runs):
            last = i == len(runs) - 1
            if start <= milepost < end or (last and milepost == end):
                return limit
        return None

    def covers(self, direction: Direction, route_length: float) -> bool:
        runs = self.limits.get(direction, ())
        position = 0.0
        for start, end, _ in runs:
            if start > position:
                return False
            position = max(position, end)
        return position >= route_length


@dataclass(frozen=True)
class IndexedCell:
    key: CellKey
    metrics: CellMetrics
    safety: Optional[float]
    comfort: float
    stability: float
    avg_fuel: float
    stability_per_waypoint: Optional[float] = None

    def to_row(self) -> dict:
        return {
            **self.metrics.to_row(),
            "safety_index": self.safety,
            "comfort_index": self.comfort,
            "stability_index": self.stability,
            NORMALIZED_STABILITY_COLUMN: self.stability_per_waypoint,
        }


def safety_index(
    metrics: CellMetrics,
    v_d: float,
    w: IndexWeights,
    signed_speed_drop: bool = False,
) -> float:
    """Weighted speed variation, speed drop below the limit and heading change.

    The drop term is max(0, (v_d - mean) / v_d) so congestion raises the
    index; `signed_speed_drop` uses the literal (mean - v_d) / v_d instead.
    """
    if not metrics.mean_speed > 0:
        raise ZeroMeanSpeedError(metrics.key)
    v_c = metrics.std_speed / metrics.mean_speed
    if signed_speed_drop:
        v_r = (metrics.mean_speed - v_d) / v_d
    else:
        v_r = max(0.0, (v_d - metrics.mean_speed) / v_d)
    return w.w_vc * v_c + w.w_vr * v_r + w.w_hc * metrics.avg_heading_change


def comfort_index(metrics: CellMetrics, w: IndexWeights) -> float:
    return w.w_pb * metrics.pct_brakes + w.w_pj * metrics.pct_high_jerk


def stability_index(metrics: CellMetrics, w: IndexWeights) -> float:
    # raw counts: scales with traffic volume
    return w.w_na * metrics.hard_accel_count + w.w_nb * metrics.hard_brake_count


def speed_limit_for(
    limits: SpeedLimitMap, key: CellKey, segment_length: float = 0.5
) -> float:
    """Limit in force where the cell's segment begins."""
    limit = limits.limit_at(key.direction, key.segment * segment_length)
    if limit is None:
        raise MissingSpeedLimitError(key.direction.value, key.segment)
    return limit


def index_all(
    cells: Iterable[CellMetrics],
    limits: SpeedLimitMap,
    w: IndexWeights,
    segment_length: float = 0.5,
    signed_speed_drop: bool = False,
    normalized_stability: bool = False,
    route_length: Optional[float] = None,
) -> list[IndexedCell]:
    """Score every cell; zero-speed cells are kept with a blank safety index.

    With `route_length`, the limits of every direction present must cover
    the whole route.
    """
    indexed = []
    unscored = 0
    checked: set[Direction] = set()
    for cell in cells:
        direction = cell.key.direction
        if route_length is not None and direction not in checked:
            if not limits.covers(direction, route_length):
                raise ConfigError(
                    f"{direction.value} limits do not cover [0, {route_length}] mi",
                    key="speed_limits_file",
                )
            checked.add(direction)
        v_d = speed_limit_for(limits, cell.key, segment_length)
        try:
            safety: Optional[float] = safety_index(cell, v_d, w, signed_speed_drop)
        except ZeroMeanSpeedError:
            safety = None
            unscored += 1
        stability = stability_index(cell, w)
        indexed.append(
            IndexedCell(
                key=cell.key,
                metrics=cell,
                safety=safety,
                comfort=comfort_index(cell, w),
                stability=stability,
                avg_fuel=cell.avg_fuel_per_vehicle,
                stability_per_waypoint=(
                    stability / cell.n_waypoints if normalized_stability else None
                ),
            )
        )
    if unscored:
        logger.warning("%d cells with zero mean speed left unscored", unscored)
    return indexed


def indexed_columns(normalized_stability: bool = False) -> list[str]:
    columns = METRIC_COLUMNS + INDEX_COLUMNS
    if normalized_stability:
        columns.append(NORMALIZED_STABILITY_COLUMN)
    return columns


def write_indexed(
    cells: Sequence[IndexedCell],
    path: "StrPath",
    grid: GridParams,
    normalized_stability: bool = False,
) -> int:
    return write_table(
        path,
        indexed_columns(normalized_stability),
        (cell.to_row() for cell in cells),
        meta=grid.as_meta(),
    )


def load_speed_limits(path: "StrPath") -> SpeedLimitMap:
    _, _, rows = read_table(path, required=LIMIT_COLUMNS)
    runs: dict[Direction, list[tuple[float, float, float]]] = {}
    for row in rows:
        direction = parse_field(path, row, "direction", Direction)
        runs.setdefault(direction, []).append(
            (
                parse_field(path, row, "milepost_start", float),
                parse_field(path, row, "milepost_end", float),
                parse_field(path, row, "limit_mps", float),
            )
        )
    return SpeedLimitMap({d: sorted(r) for d, r in runs.items()})


def read_indexed(path: "StrPath") -> tuple[GridParams, list[str], CellValues]:
    """Indexed table as numeric columns per cell; blank safety reads as None."""
    grid, columns, cells = read_cell_values(path)
    missing = [c for c in INDEX_COLUMNS if c not in columns]
    if missing:
        raise FileFormatError(path, 1, f"missing columns {missing}")
    return grid, columns, cells
