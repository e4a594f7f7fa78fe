"""End-to-end checks of the profiling pipeline against synthetic ground truth."""

import time
from dataclasses import fields, replace

import pytest

from corridor_profile.aggregate import KEY_COLUMNS, CellMetrics
from corridor_profile.baseline import Severity, build_baseline, detect_anomalies
from corridor_profile.config import RunConfig
from corridor_profile.fuel import FuelParams, fuel_rate
from corridor_profile.indices import index_all
from corridor_profile.ingest import WaypointRecord
from corridor_profile.kinematics import EventThresholds, MatchedWaypoint, derive_kinematics
from corridor_profile.pipeline import profile
from corridor_profile.route import Direction
from corridor_profile.synth import (
    DEFAULT_START_MS,
    FREE_FLOW,
    INCIDENT,
    Incident,
    ScenarioSpec,
    ground_truth,
    oracle_metrics,
)

# pylint: disable=missing-function-docstring

WEEK_MS = 7 * 86_400_000
CRUISE = 26.8224
COUNT_FIELDS = {"n_vehicles", "n_waypoints", "hard_accel_count", "hard_brake_count"}


def assert_cells_match(actual, expected):
    assert [c.key for c in actual] == [c.key for c in expected]
    for a, e in zip(actual, expected):
        for f in fields(CellMetrics):
            if f.name == "key":
                continue
            got, want = getattr(a, f.name), getattr(e, f.name)
            if f.name in COUNT_FIELDS:
                assert got == want, (a.key, f.name)
            else:
                assert got == pytest.approx(want, rel=1e-9, abs=1e-12), (a.key, f.name)


def cell_values(metrics):
    return {
        m.key: {c: float(v) for c, v in m.to_row().items() if c not in KEY_COLUMNS}
        for m in metrics
    }


def test_ten_waypoints_per_vehicle_per_segment(write_scenario):
    _, waypoints, route = write_scenario(ScenarioSpec(length_mi=5.0, vehicles=6))
    start = time.perf_counter()
    metrics = profile(waypoints, route, RunConfig()).metrics
    assert time.perf_counter() - start < 5.0
    assert len(metrics) == 10
    assert all(m.waypoints_per_vehicle == 10 for m in metrics)


def test_free_flow_at_speed_limit_scores_zero(write_scenario):
    spec = ScenarioSpec(directions=(Direction.EB, Direction.WB), vehicles=8)
    _, waypoints, route = write_scenario(spec)
    config = RunConfig(speed_limit_mps=CRUISE)
    metrics = profile(waypoints, route, config).metrics
    indexed = index_all(metrics, config.speed_limits(), config.weights)
    assert indexed
    for cell in indexed:
        assert abs(cell.safety) < 1e-12
        assert cell.comfort == 0
        assert cell.stability == 0


ORACLE_MATRIX = [
    (ScenarioSpec(), RunConfig()),
    (ScenarioSpec(directions=(Direction.EB, Direction.WB), vehicles=8), RunConfig()),
    (ScenarioSpec(length_mi=2.3, vehicles=4), RunConfig()),
    (ScenarioSpec(ping_s=1.0, vehicles=3), RunConfig()),
    (ScenarioSpec(ping_s=5.0), RunConfig()),
    (ScenarioSpec(cruise_mps=20.0, rate_per_hour=300.0), RunConfig()),
    (ScenarioSpec(entry_process="random", vehicles=15, seed=5), RunConfig()),
    (ScenarioSpec(length_mi=6.0, incident=Incident(start_mi=4.0, end_mi=5.0)), RunConfig()),
    (
        ScenarioSpec(
            directions=(Direction.EB, Direction.WB),
            length_mi=4.0,
            vehicles=6,
            incident=Incident(start_mi=2.5, end_mi=3.5, direction=Direction.WB),
        ),
        RunConfig(),
    ),
    (
        ScenarioSpec(
            length_mi=5.0,
            vehicles=20,
            incident=Incident(
                start_mi=3.0, end_mi=4.0, start_min=5.0, duration_min=10.0, upstream_mi=1.0
            ),
        ),
        RunConfig(),
    ),
    (ScenarioSpec(vehicles=12), RunConfig(segment_length_mi=0.25, interval_min=5.0)),
    (
        ScenarioSpec(entry_process="random", vehicles=10, seed=11, length_mi=2.0),
        RunConfig(segment_length_mi=0.3, interval_min=1.0, utc_offset_min=-240),
    ),
]


@pytest.mark.parametrize(("spec", "config"), ORACLE_MATRIX)
def test_pipeline_matches_oracle(write_scenario, spec, config):
    _, waypoints, route = write_scenario(spec)
    actual = profile(waypoints, route, config).metrics
    assert_cells_match(actual, oracle_metrics(spec, config))


def test_incident_sensitivity(write_scenario):
    incident = Incident(start_mi=4.0, end_mi=4.5, upstream_mi=2.0)
    spec = ScenarioSpec(length_mi=5.0, vehicles=10, incident=incident)
    config = RunConfig(speed_limit_mps=CRUISE)

    result, waypoints, route = write_scenario(replace(spec, start_ms=DEFAULT_START_MS + 2 * WEEK_MS))
    current = profile(waypoints, route, config)
    labels = {row.key: row.label for row in ground_truth(result)}
    affected = {key for key, label in labels.items() if label == INCIDENT}
    free_flow = {key for key, label in labels.items() if label == FREE_FLOW}
    assert affected
    assert free_flow

    by_key = {m.key: m for m in current.metrics}
    assert all(by_key[key].mean_speed < 4.6 for key in affected)

    safety = {c.key: c.safety for c in index_all(current.metrics, config.speed_limits(), config.weights)}
    worst_free_flow = max(safety[key] for key in free_flow)
    assert all(safety[key] > worst_free_flow for key in affected)

    history = []
    for week in range(2):
        day = replace(spec, incident=None, start_ms=DEFAULT_START_MS + week * WEEK_MS)
        _, day_waypoints, day_route = write_scenario(day)
        profiled = profile(day_waypoints, day_route, config)
        history.append((profiled.grid, cell_values(profiled.metrics)))
    baseline = build_baseline(history)
    flags = detect_anomalies((current.grid, cell_values(current.metrics)), baseline)
    alerted = {f.key for f in flags if f.severity == Severity.ALERT}
    assert len(alerted & affected) >= 0.9 * len(affected)


def test_cruise_fuel_is_conserved(write_scenario):
    _, waypoints, route = write_scenario(ScenarioSpec(length_mi=3.0, vehicles=1))
    config = RunConfig()
    metrics = profile(waypoints, route, config).metrics
    total = sum(m.avg_fuel_per_vehicle * m.n_vehicles for m in metrics)
    duration_s = (sum(m.n_waypoints for m in metrics) - 1) * 3.0
    assert total == pytest.approx(duration_s * config.fuel.cruise(CRUISE), rel=1e-9)


def test_braking_burns_cruise_fuel():
    params = FuelParams()
    speeds = [30.0, 27.5, 22.0, 22.0, 10.0]
    waypoints = [
        MatchedWaypoint(WaypointRecord("J1", 3000 * i, 40.75, -74.2, v, 90.0), 0.0, 0, Direction.EB)
        for i, v in enumerate(speeds)
    ]
    samples = derive_kinematics(waypoints, EventThresholds(), params)
    for sample in samples[1:]:
        assert sample.fuel_ml == params.cruise(sample.speed) * 3.0
        assert sample.fuel_ml == fuel_rate(sample.speed, sample.acceleration, params) * 3.0


@pytest.mark.slow
def test_million_waypoints_merge_determinism(write_scenario):
    spec = ScenarioSpec(
        length_mi=10.0,
        directions=(Direction.EB, Direction.WB),
        vehicles=2500,
        rate_per_hour=3600.0,
        noise_std_mps=0.5,
        seed=2021,
    )
    result, waypoints, route = write_scenario(spec, workers=8)
    assert sum(len(p) for p in result.journeys) >= 1_000_000

    expected = profile(waypoints, route, RunConfig(), workers=1).metrics
    for workers in (4, 8):
        start = time.perf_counter()
        metrics = profile(waypoints, route, RunConfig(), workers=workers).metrics
        elapsed = time.perf_counter() - start
        assert_cells_match(metrics, expected)
    # commodity desktop budget for the parallel run
    assert elapsed < 10.0

    deterministic = RunConfig(deterministic_mode=True)
    first = profile(waypoints, route, deterministic, workers=8).metrics
    assert profile(waypoints, route, deterministic, workers=4).metrics == first
