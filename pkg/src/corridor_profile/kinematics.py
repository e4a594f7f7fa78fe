"""Finite-difference kinematics and driving-event classification.

Acceleration is the first difference of reported speed, jerk the first
difference of acceleration, both over the ping interval in seconds. No
smoothing is applied, so derived values are exact finite differences.
"""

import enum
from collections.abc import Sequence
from dataclasses import dataclass
from typing import TYPE_CHECKING, NamedTuple, Optional

from .exceptions import ConfigError
from .fuel import fuel_rate

if TYPE_CHECKING:
    from .fuel import FuelParams
    from .ingest import WaypointRecord
    from .route import Direction


class Event(enum.Flag):
    NONE = 0
    BRAKE = enum.auto()
    HARD_BRAKE = enum.auto()
    HARD_ACCEL = enum.auto()
    HIGH_JERK = enum.auto()


@dataclass(frozen=True)
class EventThresholds:
    brake_accel_max: float = -1.0
    hard_brake_max: float = -2.638
    hard_accel_min: float = 3.8
    jerk_pos_min: float = 1.07
    jerk_neg_max: float = -1.47
    max_dt: int = 10_000

    def __post_init__(self):
        if not self.hard_brake_max < self.brake_accel_max < 0 < self.hard_accel_min:
            raise ConfigError(
                "need hard_brake_max < brake_accel_max < 0 < hard_accel_min",
                key="hard_brake_max",
            )
        if not self.jerk_neg_max < 0 < self.jerk_pos_min:
            raise ConfigError("need jerk_neg_max < 0 < jerk_pos_min", key="jerk_neg_max")
        if self.max_dt <= 0:
            raise ConfigError("must be > 0", key="max_dt_ms")


class MatchedWaypoint(NamedTuple):
    record: "WaypointRecord"
    milepost: float
    segment_index: int
    direction: "Direction"


class KinematicSample(NamedTuple):
    journey_id: str
    timestamp: int
    milepost: float
    segment_index: int
    direction: "Direction"
    speed: float
    acceleration: Optional[float]
    jerk: Optional[float]
    heading_delta: float
    flags: Event
    fuel_ml: float = 0.0


def heading_delta(previous: float, current: float) -> float:
    """Absolute heading change in degrees, wrapped to [0, 180]."""
    diff = abs(current - previous) % 360.0
    return min(diff, 360.0 - diff)


def _flags(
    acceleration: Optional[float], jerk: Optional[float], t: EventThresholds
) -> Event:
    flags = Event.NONE
    if acceleration is not None:
        if acceleration <= t.brake_accel_max:
            flags |= Event.BRAKE
        if acceleration <= t.hard_brake_max:
            flags |= Event.HARD_BRAKE
        if acceleration >= t.hard_accel_min:
            flags |= Event.HARD_ACCEL
    if jerk is not None and (jerk >= t.jerk_pos_min or jerk <= t.jerk_neg_max):
        flags |= Event.HIGH_JERK
    return flags


def classify_events(sample, thresholds: EventThresholds) -> Event:
    """Flags for anything carrying `acceleration` and `jerk` (either may be None)."""
    return _flags(sample.acceleration, sample.jerk, thresholds)


def derive_kinematics(
    waypoints: Sequence[MatchedWaypoint],
    thresholds: EventThresholds,
    fuel: Optional["FuelParams"] = None,
) -> list[KinematicSample]:
    """Derive one sample per waypoint of a time-ordered journey.

    A pair further apart than `thresholds.max_dt` leaves acceleration
    absent and restarts the chain. With `fuel`, each sample carries the
    fuel burnt since the previous ping (zero where acceleration is absent).
    """
    samples = []
    previous: Optional[MatchedWaypoint] = None
    prev_accel: Optional[float] = None
    for wp in waypoints:
        record = wp.record
        accel: Optional[float] = None
        jerk: Optional[float] = None
        delta = 0.0
        fuel_ml = 0.0
        if previous is not None:
            prev_record = previous.record
            delta = heading_delta(prev_record.heading, record.heading)
            dt_ms = record.timestamp - prev_record.timestamp
            if 0 < dt_ms <= thresholds.max_dt:
                dt = dt_ms / 1000
                accel = (record.speed - prev_record.speed) / dt
                if prev_accel is not None:
                    jerk = (accel - prev_accel) / dt
                if fuel is not None:
                    fuel_ml = fuel_rate(record.speed, accel, fuel) * dt
        samples.append(
            KinematicSample(
                journey_id=record.journey_id,
                timestamp=record.timestamp,
                milepost=wp.milepost,
                segment_index=wp.segment_index,
                direction=wp.direction,
                speed=record.speed,
                acceleration=accel,
                jerk=jerk,
                heading_delta=delta,
                flags=_flags(accel, jerk, thresholds),
                fuel_ml=fuel_ml,
            )
        )
        previous = wp
        prev_accel = accel
    return samples
