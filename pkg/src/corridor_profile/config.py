"""Run configuration: a flat `key = value` file plus environment overrides."""

import logging
import os
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import TYPE_CHECKING, Any, Optional

from .delimited import read_text
from .exceptions import ConfigError
from .fuel import FuelParams
from .indices import IndexWeights, SpeedLimitMap, load_speed_limits
from .kinematics import EventThresholds

if TYPE_CHECKING:
    from .base import StrPath

logger = logging.getLogger(__name__)

ENV_PREFIX = "CORRIDOR_PROFILE_"
TRUE_VALUES = {"1", "true", "yes", "on"}
FALSE_VALUES = {"0", "false", "no", "off"}


def _optional(parse):
    return {"parse": parse}


@dataclass(frozen=True)
class RunConfig:
    segment_length_mi: float = 0.5
    interval_min: float = 30.0
    epoch_start_ms: Optional[int] = field(default=None, metadata=_optional(int))
    utc_offset_min: int = 0

    brake_accel_max: float = -1.0
    hard_brake_max: float = -2.638
    hard_accel_min: float = 3.8
    jerk_pos_min: float = 1.07
    jerk_neg_max: float = -1.47
    max_dt_ms: int = 10_000

    w_vc: float = 1.0
    w_vr: float = 1.0
    w_hc: float = 1.0
    w_pb: float = 1.0
    w_pj: float = 1.0
    w_na: float = 1.0
    w_nb: float = 1.0

    fuel_b0: float = FuelParams.b0
    fuel_b1: float = FuelParams.b1
    fuel_b2: float = FuelParams.b2
    fuel_b3: float = FuelParams.b3
    fuel_c0: float = FuelParams.c0
    fuel_c1: float = FuelParams.c1
    fuel_c2: float = FuelParams.c2

    speed_limit_mps: float = 29.0576
    speed_limits_file: Optional[str] = field(default=None, metadata=_optional(str))

    max_offset_m: float = 50.0
    direction_tie_m: float = 0.5
    max_edge_m: float = 1000.0
    gap_split_ms: int = 30_000

    deterministic_mode: bool = False
    signed_speed_drop: bool = False
    normalized_stability: bool = False
    threads: int = 1

    baseline_min_days: int = 2
    z_warn: float = 2.0
    z_alert: float = 3.0
    std_floor_frac: float = 0.05
    std_floor_min: float = 1e-6

    @property
    def thresholds(self) -> EventThresholds:
        return EventThresholds(
            brake_accel_max=self.brake_accel_max,
            hard_brake_max=self.hard_brake_max,
            hard_accel_min=self.hard_accel_min,
            jerk_pos_min=self.jerk_pos_min,
            jerk_neg_max=self.jerk_neg_max,
            max_dt=self.max_dt_ms,
        )

    @property
    def weights(self) -> IndexWeights:
        return IndexWeights(
            self.w_vc, self.w_vr, self.w_hc, self.w_pb, self.w_pj, self.w_na, self.w_nb
        )

    @property
    def fuel(self) -> FuelParams:
        return FuelParams(
            self.fuel_b0,
            self.fuel_b1,
            self.fuel_b2,
            self.fuel_b3,
            self.fuel_c0,
            self.fuel_c1,
            self.fuel_c2,
        )

    def speed_limits(self) -> SpeedLimitMap:
        if self.speed_limits_file:
            return load_speed_limits(self.speed_limits_file)
        return SpeedLimitMap.uniform(self.speed_limit_mps)

    def validate(self) -> "RunConfig":
        positive = (
            "segment_length_mi",
            "interval_min",
            "max_offset_m",
            "max_edge_m",
            "gap_split_ms",
            "speed_limit_mps",
            "threads",
            "baseline_min_days",
            "z_warn",
        )
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError("must be > 0", key=name)
        for name in ("direction_tie_m", "std_floor_frac", "std_floor_min"):
            if getattr(self, name) < 0:
                raise ConfigError("must be >= 0", key=name)
        if not self.z_alert >= self.z_warn:
            raise ConfigError("must be >= z_warn", key="z_alert")
        # the derived parameter objects check their own invariants
        self.thresholds  # noqa: B018
        self.weights  # noqa: B018
        self.fuel.validate()
        return self


FIELDS = {f.name: f for f in fields(RunConfig)}


def _parse_value(name: str, raw: str) -> Any:
    f = FIELDS[name]
    value = raw.strip()
    if "parse" in f.metadata:
        if value.lower() in {"", "none"}:
            return None
        return f.metadata["parse"](value)
    kind = type(f.default)
    if kind is bool:
        lowered = value.lower()
        if lowered in TRUE_VALUES:
            return True
        if lowered in FALSE_VALUES:
            return False
        raise ValueError(f"not a boolean: '{value}'")
    return kind(value)


def iter_key_values(
    text: str, path: Optional["StrPath"] = None
) -> Iterator[tuple[int, str, str]]:
    """Yield (line, key, raw value) from flat `key = value` text."""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError("expected 'key = value'", path, lineno)
        yield lineno, key.strip(), value.strip()


def parse_config_text(
    text: str, path: Optional["StrPath"] = None
) -> dict[str, Any]:
    values: dict[str, Any] = {}
    for lineno, key, value in iter_key_values(text, path):
        if key not in FIELDS:
            raise ConfigError("unknown key", path, lineno, key)
        try:
            values[key] = _parse_value(key, value)
        except ValueError as exc:
            raise ConfigError(str(exc), path, lineno, key) from exc
    return values


def env_overrides(env: Mapping[str, str]) -> dict[str, Any]:
    values = {}
    for var, raw in env.items():
        if not var.startswith(ENV_PREFIX):
            continue
        key = var[len(ENV_PREFIX) :].lower()
        if key not in FIELDS:
            raise ConfigError("unknown key", "<environment>", key=var)
        try:
            values[key] = _parse_value(key, raw)
        except ValueError as exc:
            raise ConfigError(str(exc), "<environment>", key=var) from exc
    return values


def load_config(
    path: Optional["StrPath"] = None,
    env: Optional[Mapping[str, str]] = None,
    **overrides: Any,
) -> RunConfig:
    """Defaults, then the file, then `CORRIDOR_PROFILE_*` variables, then `overrides`."""
    values: dict[str, Any] = {}
    if path is not None:
        try:
            text = read_text(path)
        except OSError as exc:
            raise ConfigError(exc.strerror or str(exc), path) from exc
        values.update(parse_config_text(text, path))
        limits = values.get("speed_limits_file")
        if limits and not os.path.isabs(limits):
            values["speed_limits_file"] = str(Path(path).parent / limits)
    values.update(env_overrides(os.environ if env is None else env))
    values.update({k: v for k, v in overrides.items() if v is not None})
    config = replace(RunConfig(), **values).validate()
    logger.debug("config: %s", config)
    return config
