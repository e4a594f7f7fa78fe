import pytest

from corridor_profile import cli
from corridor_profile.aggregate import METRIC_COLUMNS, CellKey, read_metrics
from corridor_profile.cli import main
from corridor_profile.delimited import read_table
from corridor_profile.exceptions import KeyMismatchError
from corridor_profile.ingest import read_waypoints
from corridor_profile.route import Direction, load_route
from corridor_profile.synth import DEFAULT_START_MS

# pylint: disable=missing-function-docstring

WEEK_MS = 7 * 86_400_000

SCENARIO = """\
# two-direction corridor
length_mi = 3
directions = EB, WB
vehicles = 5
seed = 1
start_ms = {start_ms}
"""

INCIDENT = """\
incident_start_mi = 2
incident_end_mi = 2.5
incident_upstream_mi = 1
"""


def write_scenario(tmp_path, name, start_ms=DEFAULT_START_MS, incident=False):
    path = tmp_path / f"{name}.scenario"
    text = SCENARIO.format(start_ms=start_ms) + (INCIDENT if incident else "")
    path.write_text(text, encoding="utf-8")
    return path


def synth_and_profile(tmp_path, name, **kwargs):
    scenario = write_scenario(tmp_path, name, **kwargs)
    waypoints, route = tmp_path / f"{name}.csv", tmp_path / "route.csv"
    metrics = tmp_path / f"{name}-metrics.csv"
    assert main(["synth", str(scenario), "-o", str(waypoints), "--route", str(route)]) == 0
    assert main(["profile", str(waypoints), str(route), "-o", str(metrics)]) == 0
    return metrics


def test_synth(tmp_path):
    scenario = write_scenario(tmp_path, "day")
    waypoints, route, truth = tmp_path / "w.csv", tmp_path / "r.csv", tmp_path / "t.csv"
    assert main([
        "synth", str(scenario), "-o", str(waypoints), "--route", str(route),
        "--truth", str(truth), "--units", "mph",
    ]) == 0
    parsed = read_waypoints(waypoints)
    assert parsed.rejections == []
    assert {r.journey_id for r in parsed.records} == {
        f"{d}-{i:05d}" for d in ("EB", "WB") for i in range(5)
    }
    assert set(load_route(route)) == {Direction.EB, Direction.WB}
    _, header, rows = read_table(truth)
    assert header[:3] == ["direction", "segment", "interval"]
    assert {row["label"] for row in rows} == {"free_flow"}


def test_profile_indices_render(tmp_path, capsys):
    scenario = write_scenario(tmp_path, "day", incident=True)
    waypoints, route = tmp_path / "w.csv", tmp_path / "r.csv"
    metrics, indexed = tmp_path / "metrics.csv", tmp_path / "indexed.csv"
    rejections, tod = tmp_path / "rejections.csv", tmp_path / "tod.csv"
    assert main(["synth", str(scenario), "-o", str(waypoints), "--route", str(route)]) == 0
    assert main([
        "profile", str(waypoints), str(route), "-o", str(metrics),
        "--rejections", str(rejections), "--time-of-day", str(tod),
    ]) == 0
    out = capsys.readouterr().out
    assert out.startswith("run summary\n")
    assert "records_rejected" in out

    cells, grid = read_metrics(metrics)
    assert grid.epoch_start_ms == DEFAULT_START_MS
    assert {c.key.direction for c in cells} == {Direction.EB, Direction.WB}
    assert read_table(rejections)[2] == []
    assert read_table(tod)[1] == ["direction", "interval", "segments", "avg_n_vehicles"]

    assert main(["indices", str(metrics), "-o", str(indexed)]) == 0
    _, header, rows = read_table(indexed)
    assert header[-3:] == ["safety_index", "comfort_index", "stability_index"]
    assert len(rows) == len(cells)

    out_dir = tmp_path / "heatmaps"
    assert main([
        "render", str(indexed), "--metric", "safety_index", "--direction", "EB",
        "-o", str(out_dir), "--route-length", "3",
    ]) == 0
    image = (out_dir / "safety_index_EB.pgm").read_bytes()
    assert image.startswith(b"P5\n")
    assert (out_dir / "safety_index_EB.csv").read_text(encoding="utf-8").count("\n") == 7
    assert not (out_dir / "safety_index_WB.pgm").exists()
    bounds = read_table(out_dir / "scaling_bounds.csv")[2]
    assert [(r["metric"], r["direction"]) for r in bounds] == [("safety_index", "EB")]
    assert "scaling bounds" in capsys.readouterr().out


def test_render_report(tmp_path):
    pytest.importorskip("matplotlib")
    metrics = synth_and_profile(tmp_path, "day")
    report = tmp_path / "report" / "report.md"
    assert main([
        "render", str(metrics), "--metric", "mean_speed_mps",
        "-o", str(tmp_path / "out"), "--report", str(report),
    ]) == 0
    text = report.read_text(encoding="utf-8")
    assert "- **metric**: mean_speed_mps" in text
    assert "- **segment_length_mi**: 0.5" in text
    assert "![mean_speed_mps_EB](mean_speed_mps_EB.png)" in text
    assert "![mean_speed_mps_WB](mean_speed_mps_WB.png)" in text
    assert "scaling bounds" in text
    assert "| metric" in text
    assert "| direction" in text
    assert "anomal" not in text.lower()


def test_baseline_build_and_detect(tmp_path, capsys):
    days = [
        synth_and_profile(tmp_path, f"day{i}", start_ms=DEFAULT_START_MS + i * WEEK_MS)
        for i in range(2)
    ]
    current = synth_and_profile(
        tmp_path, "today", start_ms=DEFAULT_START_MS + 2 * WEEK_MS, incident=True
    )
    baseline, anomalies = tmp_path / "baseline.csv", tmp_path / "anomalies.csv"
    assert main(["baseline", "build", *map(str, days), "-o", str(baseline)]) == 0
    assert main([
        "baseline", "detect", str(current), "--baseline", str(baseline), "-o", str(anomalies),
    ]) == 0
    assert "anomaly flags" in capsys.readouterr().out
    _, _, rows = read_table(anomalies)
    alerted = {(r["direction"], r["segment"]) for r in rows if r["severity"] == "alert"}
    assert ("EB", "2") in alerted
    assert all(r["direction"] == "EB" for r in rows)


def test_quiet_free_flow_detect(tmp_path, capsys):
    days = [
        synth_and_profile(tmp_path, f"day{i}", start_ms=DEFAULT_START_MS + i * WEEK_MS)
        for i in range(3)
    ]
    baseline, anomalies = tmp_path / "baseline.csv", tmp_path / "anomalies.csv"
    assert main(["-q", "baseline", "build", *map(str, days[:2]), "-o", str(baseline)]) == 0
    assert main([
        "baseline", "detect", str(days[2]), "--baseline", str(baseline), "-o", str(anomalies),
    ]) == 0
    assert read_table(anomalies)[2] == []
    assert "anomaly flags: (empty)" in capsys.readouterr().out


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["profile"],
        ["render", "t.csv", "--metric", "m", "-o", "out", "--direction", "NB"],
        ["baseline", "audit"],
        ["-v", "-q", "indices", "m.csv", "-o", "i.csv"],
    ],
)
def test_usage_errors(argv, capsys):
    with pytest.raises(SystemExit) as exc_info:
        main(argv)
    assert exc_info.value.code == 1
    assert "usage:" in capsys.readouterr().err


def test_missing_input_file(tmp_path, capsys):
    argv = ["profile", str(tmp_path / "nope.csv"), str(tmp_path / "nope-route.csv"),
            "-o", str(tmp_path / "m.csv")]
    assert main(argv) == 2
    assert capsys.readouterr().err.startswith("error: ")


def test_bad_config(tmp_path, capsys):
    config = tmp_path / "run.conf"
    config.write_text("segment_len = 1\n", encoding="utf-8")
    scenario = write_scenario(tmp_path, "day")
    argv = ["--config", str(config), "synth", str(scenario), "-o", str(tmp_path / "w.csv")]
    assert main(argv) == 2
    assert "unknown key" in capsys.readouterr().err


def test_unknown_metric(tmp_path, capsys):
    metrics = synth_and_profile(tmp_path, "day")
    argv = ["render", str(metrics), "--metric", "speed", "-o", str(tmp_path / "out")]
    assert main(argv) == 2
    assert "Unknown metric 'speed'" in capsys.readouterr().err


def test_invariant_violation_exit_code(tmp_path, mocker, capsys):
    key = CellKey(Direction.EB, 0, 0)
    mocker.patch("corridor_profile.cli.profile", side_effect=KeyMismatchError(key, key))
    argv = ["profile", "w.csv", "r.csv", "-o", str(tmp_path / "m.csv")]
    assert main(argv) == 3
    assert "Cell key mismatch" in capsys.readouterr().err


def test_threads_override(tmp_path, mocker):
    metrics = synth_and_profile(tmp_path, "day")
    load_config = mocker.spy(cli, "load_config")
    assert main(["--threads", "2", "indices", str(metrics), "-o", str(tmp_path / "i.csv")]) == 0
    assert load_config.call_args.kwargs["threads"] == 2


def test_render_sizes_grid_from_route_length(tmp_path):
    table = tmp_path / "cells.csv"
    table.write_text(
        "# segment_length_mi=0.5 interval_min=30.0 route_length_mi=3.0\n"
        "direction,segment,interval,mean_speed_mps\n"
        "EB,0,0,20.0\n"
        "EB,1,1,18.0\n",
        encoding="utf-8",
    )
    out_dir = tmp_path / "out"
    argv = ["render", str(table), "--metric", "mean_speed_mps", "--direction", "EB",
            "-o", str(out_dir)]
    assert main(argv) == 0
    matrix = (out_dir / "mean_speed_mps_EB.csv").read_text(encoding="utf-8").splitlines()
    assert matrix[0] == "segment,0,1"
    assert [line.split(",")[0] for line in matrix[1:]] == ["0", "1", "2", "3", "4", "5"]
    assert matrix[-1] == "5,,"


def test_profile_records_route_length(tmp_path):
    metrics = synth_and_profile(tmp_path, "day")
    _, grid = read_metrics(metrics)
    assert grid.route_length_mi == pytest.approx(3.0, rel=0.01)


METRICS_HEADER = ",".join(METRIC_COLUMNS)


@pytest.mark.parametrize(
    ("name", "content", "argv", "message"),
    [
        (
            "m.csv",
            f"{METRICS_HEADER}\nNB,0,0,1,1,20,0,1,0,0,0,0,0,1\n",
            ["indices", "{path}", "-o", "{tmp}/i.csv"],
            "m.csv:2: column direction",
        ),
        (
            "m.csv",
            f"{METRICS_HEADER}\nEB,zero,0,1,1,20,0,1,0,0,0,0,0,1\n",
            ["indices", "{path}", "-o", "{tmp}/i.csv"],
            "m.csv:2: column segment",
        ),
        (
            "m.csv",
            f"# segment_length_mi=wide\n{METRICS_HEADER}\n",
            ["indices", "{path}", "-o", "{tmp}/i.csv"],
            "m.csv:1: metadata segment_length_mi",
        ),
        (
            "route.csv",
            b"direction,lat,lon\nEB,40.0,-83.0\nEB,40.0\xff,-83.01\n",
            ["profile", "{tmp}/w.csv", "{path}", "-o", "{tmp}/m.csv"],
            "route.csv:3: invalid UTF-8",
        ),
        (
            "run.conf",
            b"threads = 2\n# caf\xe9\n",
            ["--config", "{path}", "indices", "{tmp}/m.csv", "-o", "{tmp}/i.csv"],
            "run.conf:2: invalid UTF-8",
        ),
        (
            "day.scenario",
            b"length_mi = 3\xff\n",
            ["synth", "{path}", "-o", "{tmp}/w.csv"],
            "day.scenario:1: invalid UTF-8",
        ),
    ],
)
def test_bad_input_files(tmp_path, capsys, name, content, argv, message):
    path = tmp_path / name
    if isinstance(content, bytes):
        path.write_bytes(content)
    else:
        path.write_text(content, encoding="utf-8")
    argv = [arg.format(path=path, tmp=tmp_path) for arg in argv]
    assert main(argv) == 2
    assert message in capsys.readouterr().err


def test_bad_baseline_day_type(tmp_path, capsys):
    current, baseline = tmp_path / "current.csv", tmp_path / "baseline.csv"
    current.write_text("direction,segment,interval,n_vehicles\nEB,0,0,3\n", encoding="utf-8")
    baseline.write_text(
        "# min_days=2\n"
        "direction,segment,slot,day_type,n_vehicles_mean,n_vehicles_std,n_vehicles_days\n"
        "EB,0,0,holiday,3,0,2\n",
        encoding="utf-8",
    )
    argv = ["baseline", "detect", str(current), "--baseline", str(baseline),
            "-o", str(tmp_path / "a.csv")]
    assert main(argv) == 2
    assert "baseline.csv:3: column day_type" in capsys.readouterr().err
