import pytest

from corridor_profile.base import Renderer
from corridor_profile.table import TableRenderer

# pylint: disable=missing-function-docstring


@pytest.mark.parametrize(
    ("name", "expected"),
    [
        ("safety_index_EB", "safety_index_EB"),
        ("mean speed (EB)", "mean_speed__EB_"),
        ("pct/brakes:WB.v2", "pct_brakes_WB_v2"),
    ],
)
def test_remove_special_characters(name, expected):
    assert Renderer.remove_special_chars(name) == expected


def test_table_matches_csv():
    assert TableRenderer.matches("run_summary.csv")
    assert not TableRenderer.matches("speed.pgm")


@pytest.mark.parametrize(
    ("name", "expected"),
    [("run summary", "run_summary"), ("", "table")],
)
def test_slug(name, expected):
    assert TableRenderer([], name).slug == expected


def test_empty_table_writes_no_files(tmp_path):
    assert TableRenderer([], "rows").write(tmp_path) == []
    assert not list(tmp_path.iterdir())


def test_table_write_csv(tmp_path):
    rows = [{"metric": "pct_brakes", "bounds": {"min": 0.0, "max": 0.25}}, {"metric": "n_vehicles"}]
    (path,) = TableRenderer(rows, "scaling bounds").write(tmp_path / "out")
    assert path.name == "scaling_bounds.csv"
    assert path.read_text(encoding="utf-8") == (
        "metric,bounds.min,bounds.max\npct_brakes,0.0,0.25\nn_vehicles,,\n"
    )
