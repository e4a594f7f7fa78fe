"""Synthetic corridors and journeys with known kinematics.

Vehicles follow prescribed speed profiles without interacting: they cruise,
brake at a fixed rate towards an incident's reduced speed, crawl through the
slow zone and accelerate out of it. Everything is a function of the scenario
and its seed, so the expected cell metrics can be computed directly.
"""

import logging
import math
from collections import defaultdict
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, fields, replace
from multiprocessing import Pool
from typing import TYPE_CHECKING, NamedTuple, Optional

import numpy as np

from .aggregate import CellKey, CellMetrics
from .config import RunConfig, iter_key_values
from .delimited import read_text, write_table
from .exceptions import ConfigError, InvalidSpecError, UnsupportedSpecError
from .fuel import fuel_rate
from .ingest import WaypointRecord
from .kinematics import heading_delta
from .route import (
    EARTH_RADIUS_M,
    METERS_PER_MILE,
    Direction,
    RoutePolyline,
    SegmentGrid,
    build_polyline,
)

if TYPE_CHECKING:
    from .base import StrPath

logger = logging.getLogger(__name__)

# 2021-06-06T00:00Z
DEFAULT_START_MS = 1_622_937_600_000
HEADINGS = {Direction.EB: 90.0, Direction.WB: 270.0}
# below the default 1 km densification step, so loading the route keeps it intact
VERTEX_SPACING_M = 900.0
# pings are kept off every multiple of BOUNDARY_LATTICE_MI, which covers the
# boundaries of any segment length in whole hundredths of a mile
BOUNDARY_LATTICE_MI = 0.01
BOUNDARY_EPS_MI = 1e-7
BOUNDARY_NUDGE_MI = 1e-6
ENTRY_PROCESSES = ("regular", "random")
FREE_FLOW, INCIDENT, TRANSITION = "free_flow", "incident", "transition"
TRUTH_COLUMNS = [
    "direction",
    "segment",
    "interval",
    "n_vehicles",
    "n_waypoints",
    "mean_true_speed_mps",
    "injected_hard_brakes",
    "label",
]


@dataclass(frozen=True)
class Incident:
    """Slow zone `[start_mi - upstream_mi, end_mi]` during the time window.

    Mileposts are in the incident direction's own frame; the window starts
    `start_min` minutes after the scenario start.
    """

    start_mi: float
    end_mi: float
    start_min: float = 0.0
    duration_min: float = 60.0
    reduced_mps: float = 4.4704
    upstream_mi: float = 2.0
    direction: Direction = Direction.EB

    @property
    def zone(self) -> tuple[float, float]:
        return max(0.0, self.start_mi - self.upstream_mi), self.end_mi

    def active(self, start_ms: int, timestamp: int) -> bool:
        begin = start_ms + self.start_min * 60_000
        return begin <= timestamp < begin + self.duration_min * 60_000


@dataclass(frozen=True)
class ScenarioSpec:
    length_mi: float = 3.0
    directions: tuple[Direction, ...] = (Direction.EB,)
    vehicles: int = 10
    rate_per_hour: float = 60.0
    entry_process: str = "regular"
    cruise_mps: float = 26.8224
    ping_s: float = 3.0
    noise_std_mps: float = 0.0
    incident: Optional[Incident] = None
    seed: int = 0
    start_ms: int = DEFAULT_START_MS
    origin_lat: float = 40.75
    origin_lon: float = -74.2
    exit_accel_mps2: float = 2.0
    decel_mps2: float = -3.0

    @property
    def ping_ms(self) -> int:
        return round(self.ping_s * 1000)

    def validate(self) -> "ScenarioSpec":
        def check(ok: bool, message: str):
            if not ok:
                raise InvalidSpecError(message)

        check(self.length_mi > 0, "corridor length must be > 0")
        check(len(self.directions) > 0, "at least one direction is required")
        check(self.vehicles >= 0, "vehicle count must be >= 0")
        check(self.rate_per_hour > 0, "entry rate must be > 0")
        check(self.entry_process in ENTRY_PROCESSES, f"entry process not in {ENTRY_PROCESSES}")
        check(self.cruise_mps > 0, "cruise speed must be > 0")
        check(self.ping_ms >= 1, "ping interval must be > 0")
        check(self.noise_std_mps >= 0, "speed noise must be >= 0")
        check(self.exit_accel_mps2 > 0, "exit acceleration must be > 0")
        check(self.decel_mps2 < 0, "deceleration must be < 0")
        check(-90 < self.origin_lat < 90, "origin latitude out of range")
        check(-180 <= self.origin_lon <= 180, "origin longitude out of range")
        incident = self.incident
        if incident is not None:
            check(
                0 <= incident.start_mi < incident.end_mi <= self.length_mi,
                "incident range must lie within the corridor",
            )
            check(0 <= incident.reduced_mps <= self.cruise_mps, "reduced speed out of range")
            check(incident.duration_min > 0, "incident duration must be > 0")
            check(incident.upstream_mi >= 0, "upstream extent must be >= 0")
        return self


class Ping(NamedTuple):
    journey_id: str
    direction: Direction
    timestamp: int
    milepost: float
    true_speed: float
    speed: float
    state: str


@dataclass
class SynthResult:
    spec: ScenarioSpec
    polylines: dict[Direction, RoutePolyline]
    journeys: list[list[Ping]] = field(default_factory=list)

    def records(self) -> list[WaypointRecord]:
        records = []
        for pings in self.journeys:
            for ping in pings:
                lat, lon = self.polylines[ping.direction].point_at(ping.milepost)
                records.append(
                    WaypointRecord(
                        ping.journey_id,
                        ping.timestamp,
                        lat,
                        lon,
                        ping.speed,
                        HEADINGS[ping.direction],
                    )
                )
        return records


class TruthRow(NamedTuple):
    key: CellKey
    n_vehicles: int
    n_waypoints: int
    mean_true_speed: float
    injected_hard_brakes: int
    label: str

    def to_row(self) -> dict:
        return {
            "direction": self.key.direction,
            "segment": self.key.segment,
            "interval": self.key.interval,
            "n_vehicles": self.n_vehicles,
            "n_waypoints": self.n_waypoints,
            "mean_true_speed_mps": self.mean_true_speed,
            "injected_hard_brakes": self.injected_hard_brakes,
            "label": self.label,
        }


def scenario_route(spec: ScenarioSpec) -> dict[Direction, RoutePolyline]:
    """Straight corridor along the origin's parallel; WB is EB reversed."""
    length_m = spec.length_mi * METERS_PER_MILE
    edges = max(1, math.ceil(length_m / VERTEX_SPACING_M))
    step = length_m / edges
    lat = spec.origin_lat
    # inverse haversine along a parallel
    dlon = math.degrees(
        2 * math.asin(math.sin(step / (2 * EARTH_RADIUS_M)) / math.cos(math.radians(lat)))
    )
    vertices = [(lat, spec.origin_lon + j * dlon) for j in range(edges + 1)]
    eastbound = build_polyline(vertices, Direction.EB)
    return {Direction.EB: eastbound, Direction.WB: eastbound.reversed(Direction.WB)}


def _nudge(milepost: float) -> float:
    boundary = round(milepost / BOUNDARY_LATTICE_MI) * BOUNDARY_LATTICE_MI
    if abs(milepost - boundary) < BOUNDARY_EPS_MI:
        return milepost + BOUNDARY_NUDGE_MI
    return milepost


def _target_speed(spec: ScenarioSpec, direction: Direction, x_mi: float, t: int, v: float):
    incident = spec.incident
    if (
        incident is None
        or incident.direction != direction
        or not incident.active(spec.start_ms, t)
    ):
        return spec.cruise_mps
    lo, hi = incident.zone
    if x_mi > hi:
        return spec.cruise_mps
    if x_mi >= lo or v < spec.cruise_mps:
        return incident.reduced_mps
    # stepped braking overshoots the continuous stopping distance by at most
    # one ping of travel; one more ping covers the trigger's granularity
    braking_m = (v * v - incident.reduced_mps**2) / (2 * -spec.decel_mps2) + 2 * v * spec.ping_s
    if (lo - x_mi) * METERS_PER_MILE <= braking_m:
        return incident.reduced_mps
    return spec.cruise_mps


def _next_speed(spec: ScenarioSpec, v: float, target: float) -> float:
    if target < v:
        return max(target, v + spec.decel_mps2 * spec.ping_s)
    if target > v:
        return min(target, v + spec.exit_accel_mps2 * spec.ping_s)
    return v


def _state(spec: ScenarioSpec, v: float, target: float) -> str:
    if v == target == spec.cruise_mps:
        return FREE_FLOW
    if spec.incident is not None and v == target == spec.incident.reduced_mps:
        return INCIDENT
    return TRANSITION


def _journey(args) -> list[Ping]:
    spec, direction, index, entry_ms, route_length = args
    journey_id = f"{direction.value}-{index:05d}"
    rng = np.random.default_rng([spec.seed, list(Direction).index(direction), index])
    end_mi = route_length - 2 * BOUNDARY_NUDGE_MI

    pings = []
    x_m, v, t = 0.0, spec.cruise_mps, entry_ms
    while True:
        x_mi = _nudge(x_m / METERS_PER_MILE)
        if x_mi > end_mi:
            break
        target = _target_speed(spec, direction, x_mi, t, v)
        reported = v
        if spec.noise_std_mps > 0:
            reported = max(0.0, v + float(rng.normal(0.0, spec.noise_std_mps)))
        pings.append(
            Ping(journey_id, direction, t, x_mi, v, reported, _state(spec, v, target))
        )
        x_m += v * spec.ping_s
        t += spec.ping_ms
        v = _next_speed(spec, v, target)
    return pings


def entry_times(spec: ScenarioSpec, direction: Direction) -> list[int]:
    if spec.entry_process == "regular":
        return [
            spec.start_ms + round(i * 3_600_000 / spec.rate_per_hour)
            for i in range(spec.vehicles)
        ]
    rng = np.random.default_rng([spec.seed, list(Direction).index(direction)])
    gaps = rng.exponential(3600.0 / spec.rate_per_hour, size=spec.vehicles)
    return [spec.start_ms + int(round(float(s) * 1000)) for s in np.cumsum(gaps)]


def generate(spec: ScenarioSpec, workers: int = 1) -> SynthResult:
    """Generate every journey of `spec`, in journey_id order."""
    spec.validate()
    polylines = scenario_route(spec)
    tasks = [
        (spec, direction, i, entry, polylines[direction].route_length)
        for direction in sorted(set(spec.directions), key=lambda d: d.value)
        for i, entry in enumerate(entry_times(spec, direction))
    ]
    if workers > 1 and len(tasks) > 1:
        with Pool(processes=min(workers, len(tasks))) as pool:
            journeys = pool.map(_journey, tasks)
    else:
        journeys = [_journey(task) for task in tasks]
    journeys = [pings for pings in journeys if pings]
    logger.info(
        "generated %d journeys, %d pings",
        len(journeys),
        sum(len(pings) for pings in journeys),
    )
    return SynthResult(spec, polylines, journeys)


def _epoch(result: SynthResult, epoch_start_ms: Optional[int], utc_offset_min: int) -> int:
    if epoch_start_ms is not None:
        return epoch_start_ms
    first = min((p[0].timestamp for p in result.journeys), default=result.spec.start_ms)
    offset = utc_offset_min * 60_000
    return (first + offset) // 86_400_000 * 86_400_000 - offset


def _cell(
    ping: Ping, epoch: int, segment_length: float, segments: int, interval_ms: float
) -> CellKey:
    segment = min(math.floor(ping.milepost / segment_length), segments - 1)
    return CellKey(ping.direction, segment, math.floor((ping.timestamp - epoch) / interval_ms))


def ground_truth(
    result: SynthResult,
    segment_length_mi: float = 0.5,
    interval_min: float = 30.0,
    epoch_start_ms: Optional[int] = None,
    utc_offset_min: int = 0,
    hard_brake_max: float = -2.638,
) -> list[TruthRow]:
    """Occupancy, true speeds and injected hard brakes per cell."""
    epoch = _epoch(result, epoch_start_ms, utc_offset_min)
    interval_ms = interval_min * 60_000
    segments = SegmentGrid(result.polylines[Direction.EB].route_length, segment_length_mi)
    dt = result.spec.ping_ms / 1000

    cells: dict[CellKey, list] = defaultdict(lambda: [set(), [], 0, set()])
    for pings in result.journeys:
        previous = None
        for ping in pings:
            hard = previous is not None and (ping.true_speed - previous) / dt <= hard_brake_max
            previous = ping.true_speed
            if ping.timestamp < epoch:
                continue
            key = _cell(ping, epoch, segment_length_mi, segments.segment_count, interval_ms)
            journeys, speeds, _, states = cells[key]
            journeys.add(ping.journey_id)
            speeds.append(ping.true_speed)
            cells[key][2] += hard
            states.add(ping.state)

    rows = []
    for key in sorted(cells):
        journeys, speeds, hard_brakes, states = cells[key]
        label = states.pop() if len(states) == 1 else TRANSITION
        rows.append(
            TruthRow(
                key,
                len(journeys),
                len(speeds),
                float(np.mean(speeds)),
                hard_brakes,
                label,
            )
        )
    return rows


def write_ground_truth(rows: Sequence[TruthRow], path: "StrPath") -> int:
    return write_table(path, TRUTH_COLUMNS, (row.to_row() for row in rows))


def oracle_metrics(
    spec: ScenarioSpec,
    config: Optional[RunConfig] = None,
    epoch_start_ms: Optional[int] = None,
) -> list[CellMetrics]:
    """Expected cell metrics of a noise-free scenario, computed directly.

    Works from the generated speed profiles with plain per-cell lists and
    two-pass statistics instead of the mergeable accumulators.
    """
    config = config or RunConfig()
    if spec.noise_std_mps > 0:
        raise UnsupportedSpecError("expected metrics need a noise-free scenario")
    if spec.ping_ms > config.gap_split_ms:
        raise UnsupportedSpecError("ping interval exceeds the journey gap split")

    result = generate(spec)
    if epoch_start_ms is None:
        epoch_start_ms = config.epoch_start_ms
    epoch = _epoch(result, epoch_start_ms, config.utc_offset_min)
    interval_ms = config.interval_min * 60_000
    route_length = result.polylines[Direction.EB].route_length
    segments = SegmentGrid(route_length, config.segment_length_mi).segment_count
    fuel = config.fuel
    heading = {d: HEADINGS[d] for d in Direction}

    cells: dict[CellKey, dict[str, list]] = defaultdict(lambda: defaultdict(list))
    for pings in result.journeys:
        accel_prev = None
        for i, ping in enumerate(pings):
            accel = jerk = None
            fuel_ml = turn = 0.0
            if i > 0:
                dt_ms = ping.timestamp - pings[i - 1].timestamp
                turn = heading_delta(heading[pings[i - 1].direction], heading[ping.direction])
                if dt_ms <= config.max_dt_ms:
                    dt = dt_ms / 1000
                    accel = (ping.speed - pings[i - 1].speed) / dt
                    if accel_prev is not None:
                        jerk = (accel - accel_prev) / dt
                    fuel_ml = fuel_rate(ping.speed, accel, fuel) * dt
            accel_prev = accel
            if ping.timestamp < epoch:
                continue

            cell = cells[_cell(ping, epoch, config.segment_length_mi, segments, interval_ms)]
            cell["journeys"].append(ping.journey_id)
            cell["speed"].append(ping.speed)
            cell["turn"].append(turn)
            cell["fuel"].append(fuel_ml)
            a = accel if accel is not None else 0.0
            cell["brake"].append(accel is not None and a <= config.brake_accel_max)
            cell["hard_brake"].append(accel is not None and a <= config.hard_brake_max)
            cell["hard_accel"].append(accel is not None and a >= config.hard_accel_min)
            cell["jerk"].append(
                jerk is not None
                and (jerk >= config.jerk_pos_min or jerk <= config.jerk_neg_max)
            )

    metrics = []
    for key in sorted(cells):
        cell = cells[key]
        n = len(set(cell["journeys"]))
        m = len(cell["speed"])
        speeds = np.asarray(cell["speed"])
        metrics.append(
            CellMetrics(
                key=key,
                n_vehicles=n,
                n_waypoints=m,
                mean_speed=float(speeds.mean()),
                std_speed=float(speeds.std()),
                waypoints_per_vehicle=m / n,
                pct_brakes=sum(cell["brake"]) / m,
                pct_high_jerk=sum(cell["jerk"]) / m,
                hard_accel_count=sum(cell["hard_accel"]),
                hard_brake_count=sum(cell["hard_brake"]),
                avg_heading_change=sum(cell["turn"]) / 360.0 / n,
                avg_fuel_per_vehicle=math.fsum(cell["fuel"]) / n,
            )
        )
    return metrics


SCENARIO_FIELDS = {f.name: f for f in fields(ScenarioSpec) if f.name != "incident"}
INCIDENT_FIELDS = {f"incident_{f.name}": f for f in fields(Incident)}


def _scenario_value(f, raw: str):
    if f.name == "directions":
        return tuple(Direction(d.strip()) for d in raw.replace(" ", ",").split(",") if d)
    if f.name == "direction":
        return Direction(raw)
    if f.type in ("int", int):
        return int(raw)
    if f.type in ("float", float):
        return float(raw)
    return raw


def parse_scenario(values: Mapping[str, str], path: Optional["StrPath"] = None) -> ScenarioSpec:
    spec_values = {}
    incident_values = {}
    for key, raw in values.items():
        if key in SCENARIO_FIELDS:
            target, f = spec_values, SCENARIO_FIELDS[key]
        elif key in INCIDENT_FIELDS:
            target, f = incident_values, INCIDENT_FIELDS[key]
        else:
            raise ConfigError("unknown key", path, key=key)
        try:
            target[f.name] = _scenario_value(f, raw)
        except ValueError as exc:
            raise ConfigError(str(exc), path, key=key) from exc
    if incident_values:
        try:
            spec_values["incident"] = Incident(**incident_values)
        except TypeError as exc:
            raise InvalidSpecError(f"incomplete incident: {exc}") from exc
    return replace(ScenarioSpec(), **spec_values).validate()


def load_scenario(path: "StrPath") -> ScenarioSpec:
    """Read a flat `key = value` scenario file; `incident_*` keys form the incident."""
    try:
        text = read_text(path)
    except OSError as exc:
        raise ConfigError(exc.strerror or str(exc), path) from exc
    values = {}
    for lineno, key, raw in iter_key_values(text, path):
        if key not in SCENARIO_FIELDS and key not in INCIDENT_FIELDS:
            raise ConfigError("unknown key", path, lineno, key)
        values[key] = raw
    return parse_scenario(values, path)
