"""Binning kinematic samples into (direction, segment, interval) cells.

Accumulators are mergeable: workers build disjoint maps and the results
are merged at the end. Speed spread is kept as a running mean plus the sum
of squared deviations, merged with Chan's pairwise update, so that cells of
identical speeds finalize to an exact mean and a zero deviation.
"""

import logging
import math
from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import asdict, dataclass, field
from typing import TYPE_CHECKING, NamedTuple, Optional

from .delimited import parse_field, parse_meta, parse_number, read_table, write_table
from .exceptions import (
    EmptyCellError,
    GridMismatchError,
    KeyMismatchError,
    TimestampBeforeEpochError,
)
from .kinematics import Event, KinematicSample
from .route import Direction, grid_count

if TYPE_CHECKING:
    from .base import StrPath

logger = logging.getLogger(__name__)

MS_PER_MINUTE = 60_000

METRIC_COLUMNS = [
    "direction",
    "segment",
    "interval",
    "n_vehicles",
    "n_waypoints",
    "mean_speed_mps",
    "std_speed_mps",
    "waypoints_per_vehicle",
    "pct_brakes",
    "pct_high_jerk",
    "hard_accel_count",
    "hard_brake_count",
    "avg_heading_change",
    "avg_fuel_ml_per_veh",
]
COUNT_COLUMNS = {"n_vehicles", "n_waypoints", "hard_accel_count", "hard_brake_count"}


class CellKey(NamedTuple):
    direction: Direction
    segment: int
    interval: int


@dataclass(frozen=True)
class GridParams:
    """Binning parameters written alongside every cell table."""

    segment_length_mi: float = 0.5
    interval_min: float = 30.0
    epoch_start_ms: int = 0
    utc_offset_min: int = 0
    # longest direction polyline; sizes heatmaps when trailing segments are empty
    route_length_mi: Optional[float] = None

    @property
    def interval_ms(self) -> float:
        return self.interval_min * MS_PER_MINUTE

    def same_grid(self, other: "GridParams") -> bool:
        """Segments and intervals line up; the epoch may fall on another day."""
        return (
            self.segment_length_mi == other.segment_length_mi
            and self.interval_min == other.interval_min
        )

    def check_compatible(self, other: "GridParams") -> None:
        if not self.same_grid(other):
            raise GridMismatchError(
                (self.segment_length_mi, self.interval_min),
                (other.segment_length_mi, other.interval_min),
            )

    def as_meta(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_meta(cls, meta: Mapping[str, str], path: "StrPath" = "<table>") -> "GridParams":
        defaults = cls()
        return cls(
            segment_length_mi=parse_meta(
                path, meta, "segment_length_mi", float, defaults.segment_length_mi
            ),
            interval_min=parse_meta(path, meta, "interval_min", float, defaults.interval_min),
            epoch_start_ms=parse_meta(path, meta, "epoch_start_ms", int, defaults.epoch_start_ms),
            utc_offset_min=parse_meta(path, meta, "utc_offset_min", int, defaults.utc_offset_min),
            route_length_mi=parse_meta(path, meta, "route_length_mi", float, None),
        )

    def segment_count(self) -> Optional[int]:
        """Segments covering the route, when its length is recorded."""
        if self.route_length_mi is None:
            return None
        return grid_count(self.route_length_mi, self.segment_length_mi)


@dataclass
class CellAccumulator:
    key: CellKey
    journeys: set[str] = field(default_factory=set)
    m: int = 0
    mean_speed: float = 0.0
    m2_speed: float = 0.0
    brake_count: int = 0
    high_jerk_count: int = 0
    hard_brake_count: int = 0
    hard_accel_count: int = 0
    sum_abs_heading_delta: float = 0.0
    sum_fuel: float = 0.0

    def add(self, sample: KinematicSample) -> "CellAccumulator":
        self.m += 1
        delta = sample.speed - self.mean_speed
        self.mean_speed += delta / self.m
        self.m2_speed += delta * (sample.speed - self.mean_speed)
        flags = sample.flags
        if Event.BRAKE in flags:
            self.brake_count += 1
        if Event.HARD_BRAKE in flags:
            self.hard_brake_count += 1
        if Event.HARD_ACCEL in flags:
            self.hard_accel_count += 1
        if Event.HIGH_JERK in flags:
            self.high_jerk_count += 1
        self.sum_abs_heading_delta += sample.heading_delta
        self.sum_fuel += sample.fuel_ml
        self.journeys.add(sample.journey_id)
        return self


@dataclass(frozen=True)
class CellMetrics:
    key: CellKey
    n_vehicles: int
    n_waypoints: int
    mean_speed: float
    std_speed: float
    waypoints_per_vehicle: float
    pct_brakes: float
    pct_high_jerk: float
    hard_accel_count: int
    hard_brake_count: int
    avg_heading_change: float
    avg_fuel_per_vehicle: float

    def to_row(self) -> dict:
        return {
            "direction": self.key.direction,
            "segment": self.key.segment,
            "interval": self.key.interval,
            "n_vehicles": self.n_vehicles,
            "n_waypoints": self.n_waypoints,
            "mean_speed_mps": self.mean_speed,
            "std_speed_mps": self.std_speed,
            "waypoints_per_vehicle": self.waypoints_per_vehicle,
            "pct_brakes": self.pct_brakes,
            "pct_high_jerk": self.pct_high_jerk,
            "hard_accel_count": self.hard_accel_count,
            "hard_brake_count": self.hard_brake_count,
            "avg_heading_change": self.avg_heading_change,
            "avg_fuel_ml_per_veh": self.avg_fuel_per_vehicle,
        }

    @classmethod
    def from_row(cls, row, path: "StrPath" = "<table>") -> "CellMetrics":
        def num(column):
            kind = int if column in COUNT_COLUMNS else float
            return parse_number(path, row, column, kind)

        return cls(
            key=CellKey(
                parse_field(path, row, "direction", Direction),
                parse_field(path, row, "segment", int),
                parse_field(path, row, "interval", int),
            ),
            n_vehicles=num("n_vehicles"),
            n_waypoints=num("n_waypoints"),
            mean_speed=num("mean_speed_mps"),
            std_speed=num("std_speed_mps"),
            waypoints_per_vehicle=num("waypoints_per_vehicle"),
            pct_brakes=num("pct_brakes"),
            pct_high_jerk=num("pct_high_jerk"),
            hard_accel_count=num("hard_accel_count"),
            hard_brake_count=num("hard_brake_count"),
            avg_heading_change=num("avg_heading_change"),
            avg_fuel_per_vehicle=num("avg_fuel_ml_per_veh"),
        )


def assign_cell(
    sample: KinematicSample, epoch_start: int, interval_length: float = 30
) -> CellKey:
    """Cell of `sample`; intervals are closed on the left."""
    if sample.timestamp < epoch_start:
        raise TimestampBeforeEpochError(sample.timestamp, epoch_start)
    k = math.floor((sample.timestamp - epoch_start) / (interval_length * MS_PER_MINUTE))
    return CellKey(sample.direction, sample.segment_index, k)


def accumulate(
    acc: CellAccumulator,
    sample: KinematicSample,
    epoch_start: int,
    interval_length: float = 30,
) -> CellAccumulator:
    key = assign_cell(sample, epoch_start, interval_length)
    if key != acc.key:
        raise KeyMismatchError(acc.key, key)
    return acc.add(sample)


def merge(a: CellAccumulator, b: CellAccumulator) -> CellAccumulator:
    if a.key != b.key:
        raise KeyMismatchError(a.key, b.key)
    if b.m == 0 or a.m == 0:
        source = a if b.m == 0 else b
        return CellAccumulator(**{**vars(source), "journeys": a.journeys | b.journeys})

    m = a.m + b.m
    delta = b.mean_speed - a.mean_speed
    return CellAccumulator(
        key=a.key,
        journeys=a.journeys | b.journeys,
        m=m,
        mean_speed=a.mean_speed + delta * b.m / m,
        m2_speed=a.m2_speed + b.m2_speed + delta * delta * a.m * b.m / m,
        brake_count=a.brake_count + b.brake_count,
        high_jerk_count=a.high_jerk_count + b.high_jerk_count,
        hard_brake_count=a.hard_brake_count + b.hard_brake_count,
        hard_accel_count=a.hard_accel_count + b.hard_accel_count,
        sum_abs_heading_delta=a.sum_abs_heading_delta + b.sum_abs_heading_delta,
        sum_fuel=a.sum_fuel + b.sum_fuel,
    )


def finalize(acc: CellAccumulator) -> CellMetrics:
    if acc.m < 1 or not acc.journeys:
        raise EmptyCellError(acc.key)
    m = acc.m
    n = len(acc.journeys)
    return CellMetrics(
        key=acc.key,
        n_vehicles=n,
        n_waypoints=m,
        mean_speed=acc.mean_speed,
        std_speed=math.sqrt(max(acc.m2_speed / m, 0.0)),
        waypoints_per_vehicle=m / n,
        pct_brakes=acc.brake_count / m,
        pct_high_jerk=acc.high_jerk_count / m,
        hard_accel_count=acc.hard_accel_count,
        hard_brake_count=acc.hard_brake_count,
        avg_heading_change=(acc.sum_abs_heading_delta / 360.0) / n,
        avg_fuel_per_vehicle=acc.sum_fuel / n,
    )


Partials = dict[CellKey, dict[str, CellAccumulator]]


def aggregate_samples(
    samples: Iterable[KinematicSample],
    epoch_start: int,
    interval_length: float = 30,
    into: Optional[dict[CellKey, CellAccumulator]] = None,
) -> dict[CellKey, CellAccumulator]:
    """Accumulate samples in arrival order."""
    cells = {} if into is None else into
    for sample in samples:
        key = assign_cell(sample, epoch_start, interval_length)
        acc = cells.get(key)
        if acc is None:
            acc = cells[key] = CellAccumulator(key)
        acc.add(sample)
    return cells


def aggregate_journey_partials(
    samples: Iterable[KinematicSample],
    epoch_start: int,
    interval_length: float = 30,
    into: Optional[Partials] = None,
) -> Partials:
    """Accumulate per (cell, journey); the unit of canonical reduction."""
    partials: Partials = defaultdict(dict) if into is None else into
    for sample in samples:
        key = assign_cell(sample, epoch_start, interval_length)
        per_journey = partials[key]
        acc = per_journey.get(sample.journey_id)
        if acc is None:
            acc = per_journey[sample.journey_id] = CellAccumulator(key)
        acc.add(sample)
    return partials


def merge_maps(
    maps: Iterable[Mapping[CellKey, CellAccumulator]],
) -> dict[CellKey, CellAccumulator]:
    merged: dict[CellKey, CellAccumulator] = {}
    for cells in maps:
        for key, acc in cells.items():
            merged[key] = merge(merged[key], acc) if key in merged else acc
    return merged


def reduce_partials(partials: Iterable[Partials]) -> dict[CellKey, CellAccumulator]:
    """Merge journey partials per cell in journey_id order.

    The result is bitwise independent of how journeys were spread across
    workers, as long as each journey was accumulated by a single worker.
    """
    gathered: dict[CellKey, dict[str, CellAccumulator]] = defaultdict(dict)
    for part in partials:
        for key, per_journey in part.items():
            gathered[key].update(per_journey)
    cells = {}
    for key in sorted(gathered):
        acc = CellAccumulator(key)
        for journey_id in sorted(gathered[key]):
            acc = merge(acc, gathered[key][journey_id])
        cells[key] = acc
    return cells


def finalize_all(cells: Mapping[CellKey, CellAccumulator]) -> list[CellMetrics]:
    return [finalize(cells[key]) for key in sorted(cells)]


def time_of_day_profile(metrics: Iterable[CellMetrics]) -> list[dict]:
    """Average vehicle count across segments, per direction and interval."""
    totals: dict[tuple[Direction, int], list[int]] = defaultdict(list)
    for cell in metrics:
        totals[(cell.key.direction, cell.key.interval)].append(cell.n_vehicles)
    return [
        {
            "direction": direction,
            "interval": interval,
            "segments": len(counts),
            "avg_n_vehicles": sum(counts) / len(counts),
        }
        for (direction, interval), counts in sorted(totals.items())
    ]


def write_metrics(
    metrics: Sequence[CellMetrics], path: "StrPath", grid: GridParams
) -> int:
    return write_table(
        path, METRIC_COLUMNS, (m.to_row() for m in metrics), meta=grid.as_meta()
    )


def read_metrics(path: "StrPath") -> tuple[list[CellMetrics], GridParams]:
    meta, _, rows = read_table(path, required=METRIC_COLUMNS)
    return [CellMetrics.from_row(row, path) for row in rows], GridParams.from_meta(meta, path)


CellValues = dict[CellKey, dict[str, Optional[float]]]
KEY_COLUMNS = ("direction", "segment", "interval")


def read_cell_values(path: "StrPath") -> tuple[GridParams, list[str], CellValues]:
    """Read any cell table (metrics, indexed) as numeric columns per cell."""
    meta, header, rows = read_table(path, required=KEY_COLUMNS)
    columns = [c for c in header if c not in KEY_COLUMNS]
    cells: CellValues = {}
    for row in rows:
        key = CellKey(
            parse_field(path, row, "direction", Direction),
            parse_field(path, row, "segment", int),
            parse_field(path, row, "interval", int),
        )
        cells[key] = {c: parse_number(path, row, c) for c in columns}
    return GridParams.from_meta(meta, path), columns, cells
