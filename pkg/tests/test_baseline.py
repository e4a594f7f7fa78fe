import random

import pytest

from corridor_profile.aggregate import CellKey, GridParams
from corridor_profile.baseline import (
    MS_PER_DAY,
    DayType,
    Severity,
    SlotKey,
    build_baseline,
    detect_anomalies,
    read_baseline,
    slot_of,
    write_anomalies,
    write_baseline,
)
from corridor_profile.delimited import read_table
from corridor_profile.exceptions import GridMismatchError, InsufficientDaysError
from corridor_profile.route import Direction

# pylint: disable=missing-function-docstring

# Sunday 2021-06-06 00:00 UTC
SUNDAY = 1_622_937_600_000
WEEK = 7 * MS_PER_DAY


def day(epoch, values):
    """One daily table; `values` maps (segment, interval) to a metric dict."""
    cells = {
        CellKey(Direction.EB, segment, interval): dict(metrics)
        for (segment, interval), metrics in values.items()
    }
    return GridParams(0.5, 30.0, epoch), cells


def typical(speed=25.0, vehicles=10.0, stability=2.0):
    return {"mean_speed_mps": speed, "n_vehicles": vehicles, "stability_index": stability}


@pytest.mark.parametrize(
    ("epoch", "interval", "expected"),
    [
        (SUNDAY, 0, (0, DayType.WEEKEND)),
        (SUNDAY, 47, (47, DayType.WEEKEND)),
        (SUNDAY, 48, (0, DayType.WEEKDAY)),
        (SUNDAY + 5 * MS_PER_DAY, 20, (20, DayType.WEEKDAY)),
        (SUNDAY + 6 * MS_PER_DAY, 1, (1, DayType.WEEKEND)),
    ],
)
def test_slot_of(epoch, interval, expected):
    assert slot_of(GridParams(0.5, 30.0, epoch), interval) == expected


def test_slot_of_local_time():
    # 03:00 UTC Sunday is still Saturday evening four hours west
    grid = GridParams(0.5, 30.0, SUNDAY, utc_offset_min=-240)
    assert slot_of(grid, 6) == (46, DayType.WEEKEND)
    assert slot_of(grid, 9) == (1, DayType.WEEKEND)


def test_identical_days_have_zero_spread():
    values = {(0, 0): typical(), (1, 0): typical(speed=20.0)}
    profile = build_baseline([day(SUNDAY, values), day(SUNDAY + WEEK, values)])
    stats = profile.entries[SlotKey(Direction.EB, 1, 0, DayType.WEEKEND)]["mean_speed_mps"]
    assert stats.mean == 20.0
    assert stats.std == 0.0
    assert stats.days == 2


def test_mean_over_days():
    profile = build_baseline(
        [day(SUNDAY, {(0, 0): typical(10.0)}), day(SUNDAY + WEEK, {(0, 0): typical(20.0)})]
    )
    stats = profile.entries[SlotKey(Direction.EB, 0, 0, DayType.WEEKEND)]["mean_speed_mps"]
    assert stats.mean == 15.0
    assert stats.std == 5.0


def test_single_day_cell_is_low_confidence():
    profile = build_baseline(
        [day(SUNDAY, {(0, 0): typical(), (1, 0): typical()}), day(SUNDAY + WEEK, {(0, 0): typical()})]
    )
    seg0 = SlotKey(Direction.EB, 0, 0, DayType.WEEKEND)
    seg1 = SlotKey(Direction.EB, 1, 0, DayType.WEEKEND)
    assert not profile.low_confidence(seg0, "mean_speed_mps")
    assert profile.low_confidence(seg1, "mean_speed_mps")
    # the second day covers interval 0 without segment 1: zero vehicles there
    assert profile.entries[seg1]["n_vehicles"] == (5.0, 5.0, 2)


def test_absent_slot_inside_span_counts_zero_vehicles():
    monday = SUNDAY + MS_PER_DAY
    cells = {(0, 0): typical(vehicles=5.0), (1, 48): typical(vehicles=5.0)}
    profile = build_baseline([day(monday, cells), day(monday, cells)])
    stats = profile.entries[SlotKey(Direction.EB, 0, 0, DayType.WEEKDAY)]
    assert stats["n_vehicles"].mean == 2.5
    assert stats["n_vehicles"].days == 4
    assert stats["mean_speed_mps"].days == 2


def test_self_consistency_over_several_days():
    x = day(SUNDAY + MS_PER_DAY, {(0, 0): typical(vehicles=5.0), (1, 48): typical(vehicles=5.0)})
    baseline = build_baseline([x, x])
    assert detect_anomalies(x, baseline) == []


def test_metrics_default_to_common_columns():
    first = day(SUNDAY, {(0, 0): {**typical(), "extra": 1.0}})
    second = day(SUNDAY + WEEK, {(0, 0): typical()})
    profile = build_baseline([first, second])
    assert profile.metrics == ["n_vehicles", "mean_speed_mps", "stability_index"]


def test_too_few_days():
    with pytest.raises(InsufficientDaysError):
        build_baseline([day(SUNDAY, {(0, 0): typical()})])


def test_grid_mismatch():
    other = (GridParams(0.25, 30.0, SUNDAY + WEEK), {})
    with pytest.raises(GridMismatchError):
        build_baseline([day(SUNDAY, {(0, 0): typical()}), other])


def history():
    return [
        day(SUNDAY + i * WEEK, {(0, 0): typical(20.0 + d), (1, 0): typical(20.0 + d, stability=10 + 2 * d)})
        for i, d in enumerate([-1.0, 1.0, -1.0, 1.0])
    ]


def test_observed_equals_mean_no_flags():
    baseline = build_baseline(history())
    current = day(SUNDAY + 10 * WEEK, {(0, 0): typical(20.0), (1, 0): typical(20.0, stability=10)})
    assert detect_anomalies(current, baseline) == []


def test_self_consistency():
    tables = history()
    for grid, cells in tables:
        baseline = build_baseline([(grid, cells), (grid, cells)])
        assert detect_anomalies((grid, cells), baseline) == []


def test_speed_drop_alert_and_stability_warn():
    baseline = build_baseline(history())
    # speed std 1 -> 5 below; stability std 2 -> 2.5 above
    current = day(
        SUNDAY + 10 * WEEK,
        {(0, 0): typical(15.0), (1, 0): typical(20.0, stability=15.0)},
    )
    flags = detect_anomalies(current, baseline)
    assert [(f.key.segment, f.metric, f.severity) for f in flags] == [
        (0, "mean_speed_mps", Severity.ALERT),
        (1, "stability_index", Severity.WARN),
    ]
    assert flags[0].z == pytest.approx(-5.0)
    assert flags[0].mean == 20.0
    assert flags[1].z == pytest.approx(2.5)


def test_benign_deviation_is_info():
    baseline = build_baseline(history())
    current = day(
        SUNDAY + 10 * WEEK, {(0, 0): typical(26.0), (1, 0): typical(20.0, stability=10.0)}
    )
    (flag,) = detect_anomalies(current, baseline)
    assert flag.metric == "mean_speed_mps"
    assert flag.severity == Severity.INFO


def test_std_floor_on_constant_slot():
    values = {(0, 0): typical(20.0)}
    baseline = build_baseline([day(SUNDAY, values), day(SUNDAY + WEEK, values)])
    # floor is 5% of 20 = 1 m/s
    current = day(SUNDAY + 2 * WEEK, {(0, 0): typical(17.5)})
    (flag,) = detect_anomalies(current, baseline)
    assert flag.z == pytest.approx(-2.5)
    assert flag.severity == Severity.WARN


def test_missing_cell_scores_zero_vehicles():
    baseline = build_baseline(history())
    current = day(SUNDAY + 10 * WEEK, {(0, 0): typical(20.0)})
    (flag,) = detect_anomalies(current, baseline)
    assert flag.key == CellKey(Direction.EB, 1, 0)
    assert flag.metric == "n_vehicles"
    assert flag.observed == 0.0
    assert flag.severity == Severity.ALERT


def test_low_confidence_slots_skipped(caplog):
    baseline = build_baseline(
        [day(SUNDAY, {(0, 0): typical(), (1, 0): typical()}), day(SUNDAY + WEEK, {(0, 0): typical()})]
    )
    current = day(SUNDAY + 2 * WEEK, {(0, 0): typical(), (1, 0): typical(speed=1.0)})
    assert detect_anomalies(current, baseline) == []
    assert "low-confidence" in caplog.text


def test_weekday_slots_do_not_match_weekend():
    baseline = build_baseline(history())
    monday = day(SUNDAY + MS_PER_DAY, {(0, 0): typical(1.0)})
    assert detect_anomalies(monday, baseline) == []


def test_flags_invariant_under_row_order():
    baseline = build_baseline(history())
    grid, cells = day(
        SUNDAY + 10 * WEEK,
        {(0, 0): typical(15.0, vehicles=2.0), (1, 0): typical(30.0, stability=30.0)},
    )
    expected = detect_anomalies((grid, cells), baseline)
    items = list(cells.items())
    random.Random(4).shuffle(items)
    assert detect_anomalies((grid, dict(items)), baseline) == expected


def test_detect_grid_mismatch():
    baseline = build_baseline(history())
    with pytest.raises(GridMismatchError):
        detect_anomalies((GridParams(0.5, 15.0, SUNDAY), {}), baseline)


def test_write_read_baseline(tmp_path):
    tables = history()
    tables[0][1][CellKey(Direction.EB, 2, 3)] = {"mean_speed_mps": 9.0, "n_vehicles": 1.0}
    baseline = build_baseline(tables)
    path = tmp_path / "baseline.csv"
    write_baseline(baseline, path)

    again = read_baseline(path)
    assert again.metrics == baseline.metrics
    assert again.min_days == 2
    assert again.grid.same_grid(baseline.grid)
    assert again.entries == baseline.entries

    _, header, _ = read_table(path)
    assert header[:4] == ["direction", "segment", "slot", "day_type"]
    assert "mean_speed_mps_days" in header


def test_write_anomalies(tmp_path):
    baseline = build_baseline(history())
    flags = detect_anomalies(day(SUNDAY + 10 * WEEK, {(0, 0): typical(15.0)}), baseline)
    path = tmp_path / "anomalies.csv"
    assert write_anomalies(flags, path) == len(flags)
    _, header, rows = read_table(path)
    assert header == ["direction", "segment", "interval", "metric", "observed", "mean", "z", "severity"]
    assert rows[0]["severity"] == "alert"
