"""Historical per-slot baselines and z-score anomaly flags."""

import logging
from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import TYPE_CHECKING, NamedTuple, Optional

import numpy as np

from .aggregate import CellKey, CellValues, GridParams
from .delimited import parse_field, parse_meta, parse_number, read_table, write_table
from .exceptions import InsufficientDaysError
from .route import Direction

if TYPE_CHECKING:
    from .base import StrPath

logger = logging.getLogger(__name__)

MS_PER_DAY = 86_400_000
HIGH, LOW = "high", "low"

# which side of the baseline is bad for each metric
POLARITY = {
    "n_vehicles": LOW,
    "mean_speed_mps": LOW,
    "std_speed_mps": HIGH,
    "waypoints_per_vehicle": HIGH,
    "pct_brakes": HIGH,
    "pct_high_jerk": HIGH,
    "hard_accel_count": HIGH,
    "hard_brake_count": HIGH,
    "avg_heading_change": HIGH,
    "avg_fuel_ml_per_veh": HIGH,
    "safety_index": HIGH,
    "comfort_index": HIGH,
    "stability_index": HIGH,
}
ANOMALY_COLUMNS = [
    "direction",
    "segment",
    "interval",
    "metric",
    "observed",
    "mean",
    "z",
    "severity",
]


class DayType(str, Enum):
    WEEKDAY = "weekday"
    WEEKEND = "weekend"


class Severity(str, Enum):
    INFO = "info"
    WARN = "warn"
    ALERT = "alert"


class SlotKey(NamedTuple):
    direction: Direction
    segment: int
    slot: int
    day_type: DayType


class SlotStats(NamedTuple):
    mean: float
    std: float
    days: int


@dataclass
class BaselineProfile:
    grid: GridParams
    min_days: int
    metrics: list[str]
    entries: dict[SlotKey, dict[str, SlotStats]] = field(default_factory=dict)

    def low_confidence(self, key: SlotKey, metric: str) -> bool:
        stats = self.entries.get(key, {}).get(metric)
        return stats is None or stats.days < self.min_days


@dataclass(frozen=True)
class AnomalyFlag:
    key: CellKey
    metric: str
    observed: float
    mean: float
    z: float
    severity: Severity

    def to_row(self) -> dict:
        return {
            "direction": self.key.direction,
            "segment": self.key.segment,
            "interval": self.key.interval,
            "metric": self.metric,
            "observed": self.observed,
            "mean": self.mean,
            "z": self.z,
            "severity": self.severity,
        }


def slot_of(grid: GridParams, interval: int) -> tuple[int, DayType]:
    """Interval-of-day index and day type of interval `interval`, local time."""
    local_ms = grid.epoch_start_ms + grid.utc_offset_min * 60_000 + interval * grid.interval_ms
    slot = int((local_ms % MS_PER_DAY) // grid.interval_ms)
    weekday = datetime.fromtimestamp(local_ms // 1000, tz=timezone.utc).weekday()
    return slot, DayType.WEEKEND if weekday >= 5 else DayType.WEEKDAY


def build_baseline(
    tables: Sequence[tuple[GridParams, CellValues]],
    min_days: int = 2,
    metrics: Optional[Iterable[str]] = None,
) -> BaselineProfile:
    """Per-slot mean and population deviation of each metric over days."""
    if len(tables) < min_days:
        raise InsufficientDaysError(len(tables), min_days)
    grid = tables[0][0]
    for other, _ in tables[1:]:
        grid.check_compatible(other)

    if metrics is None:
        present = [set().union(*(v.keys() for v in cells.values())) for _, cells in tables]
        common = set.intersection(*present) if present else set()
        metrics = [m for m in POLARITY if m in common]
    metrics = list(metrics)

    samples: dict[SlotKey, dict[str, list[float]]] = defaultdict(lambda: defaultdict(list))
    by_slot: dict[tuple[int, DayType], set[SlotKey]] = defaultdict(set)
    for table_grid, cells in tables:
        for key in cells:
            slot_key = SlotKey(key.direction, key.segment, *slot_of(table_grid, key.interval))
            by_slot[(slot_key.slot, slot_key.day_type)].add(slot_key)

    # one sample per (table, local date): a slot recurs once per day
    for table_grid, cells in tables:
        if not cells:
            continue
        intervals = [key.interval for key in cells]
        for k in range(min(intervals), max(intervals) + 1):
            for slot_key in by_slot.get(slot_of(table_grid, k), ()):
                values = cells.get(CellKey(slot_key.direction, slot_key.segment, k))
                if values is None:
                    # absent inside the span is a zero-vehicle observation
                    if "n_vehicles" in metrics:
                        samples[slot_key]["n_vehicles"].append(0.0)
                    continue
                for metric in metrics:
                    value = values.get(metric)
                    if value is not None:
                        samples[slot_key][metric].append(value)

    profile = BaselineProfile(grid, min_days, metrics)
    for slot_key in sorted(samples):
        per_metric = samples[slot_key]
        profile.entries[slot_key] = {
            metric: SlotStats(
                float(np.mean(values)), float(np.std(values)), len(values)
            )
            for metric, values in per_metric.items()
        }
    low = sum(
        1 for key in profile.entries for m in metrics if profile.low_confidence(key, m)
    )
    logger.info(
        "baseline: %d slots from %d tables (%d low-confidence slot metrics)",
        len(profile.entries),
        len(tables),
        low,
    )
    return profile


def _score(
    key: CellKey,
    metric: str,
    observed: float,
    stats: SlotStats,
    z_warn: float,
    z_alert: float,
    std_floor_frac: float,
    std_floor_min: float,
) -> Optional[AnomalyFlag]:
    floor = max(std_floor_frac * abs(stats.mean), std_floor_min)
    z = (observed - stats.mean) / max(stats.std, floor)
    if abs(z) < z_warn:
        return None
    badness = z if POLARITY[metric] == HIGH else -z
    if badness >= z_alert:
        severity = Severity.ALERT
    elif badness >= z_warn:
        severity = Severity.WARN
    else:
        severity = Severity.INFO
    return AnomalyFlag(key, metric, observed, stats.mean, z, severity)


def detect_anomalies(
    current: tuple[GridParams, CellValues],
    baseline: BaselineProfile,
    z_warn: float = 2.0,
    z_alert: float = 3.0,
    std_floor_frac: float = 0.05,
    std_floor_min: float = 1e-6,
) -> list[AnomalyFlag]:
    """Flag cells whose |z| reaches `z_warn`.

    Deviations on the bad side of a metric are `warn`/`alert`; deviations
    on the benign side are `info`. Cells the baseline expects but the
    current table lacks are scored as zero vehicles.
    """
    grid, cells = current
    baseline.grid.check_compatible(grid)
    params = (z_warn, z_alert, std_floor_frac, std_floor_min)

    flags = []
    skipped = 0
    for key, values in cells.items():
        slot, day_type = slot_of(grid, key.interval)
        slot_key = SlotKey(key.direction, key.segment, slot, day_type)
        entry = baseline.entries.get(slot_key)
        if entry is None:
            continue
        for metric in baseline.metrics:
            observed = values.get(metric)
            if observed is None or metric not in entry:
                continue
            if baseline.low_confidence(slot_key, metric):
                skipped += 1
                continue
            flag = _score(key, metric, observed, entry[metric], *params)
            if flag:
                flags.append(flag)

    if cells and "n_vehicles" in baseline.metrics:
        flags.extend(_missing_cells(grid, cells, baseline, params))
    if skipped:
        logger.warning("skipped %d low-confidence slot metrics", skipped)

    flags.sort(key=lambda f: (f.key, f.metric))
    logger.info("%d anomaly flags", len(flags))
    return flags


def _missing_cells(
    grid: GridParams,
    cells: Mapping[CellKey, object],
    baseline: BaselineProfile,
    params: tuple,
) -> list[AnomalyFlag]:
    by_slot: dict[tuple[int, DayType], list[SlotKey]] = defaultdict(list)
    for slot_key in baseline.entries:
        by_slot[(slot_key.slot, slot_key.day_type)].append(slot_key)

    intervals = [key.interval for key in cells]
    flags = []
    for k in range(min(intervals), max(intervals) + 1):
        for slot_key in by_slot.get(slot_of(grid, k), ()):
            key = CellKey(slot_key.direction, slot_key.segment, k)
            if key in cells or baseline.low_confidence(slot_key, "n_vehicles"):
                continue
            stats = baseline.entries[slot_key]["n_vehicles"]
            flag = _score(key, "n_vehicles", 0.0, stats, *params)
            if flag:
                flags.append(flag)
    return flags


def _triple(metric: str) -> list[str]:
    return [f"{metric}_mean", f"{metric}_std", f"{metric}_days"]


def write_baseline(profile: BaselineProfile, path: "StrPath") -> int:
    header = ["direction", "segment", "slot", "day_type"]
    for metric in profile.metrics:
        header.extend(_triple(metric))

    def rows():
        for slot_key, per_metric in profile.entries.items():
            row = slot_key._asdict()
            for metric, stats in per_metric.items():
                row.update(zip(_triple(metric), stats))
            yield row

    meta = {
        "segment_length_mi": profile.grid.segment_length_mi,
        "interval_min": profile.grid.interval_min,
        "utc_offset_min": profile.grid.utc_offset_min,
        "min_days": profile.min_days,
    }
    return write_table(path, header, rows(), meta=meta)


def read_baseline(path: "StrPath") -> BaselineProfile:
    meta, header, rows = read_table(path, required=["direction", "segment", "slot", "day_type"])
    metrics = [c[: -len("_mean")] for c in header if c.endswith("_mean")]
    profile = BaselineProfile(
        GridParams.from_meta(meta, path), parse_meta(path, meta, "min_days", int, 2), metrics
    )
    for row in rows:
        slot_key = SlotKey(
            parse_field(path, row, "direction", Direction),
            parse_field(path, row, "segment", int),
            parse_field(path, row, "slot", int),
            parse_field(path, row, "day_type", DayType),
        )
        per_metric = {}
        for metric in metrics:
            mean_col, std_col, days_col = _triple(metric)
            if row.get(mean_col, "") == "":
                continue
            per_metric[metric] = SlotStats(
                parse_number(path, row, mean_col),
                parse_number(path, row, std_col),
                parse_number(path, row, days_col, int),
            )
        profile.entries[slot_key] = per_metric
    return profile


def write_anomalies(flags: Sequence[AnomalyFlag], path: "StrPath") -> int:
    return write_table(path, ANOMALY_COLUMNS, (f.to_row() for f in flags))
