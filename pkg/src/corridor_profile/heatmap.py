"""Segment-by-interval heatmaps of one metric for one direction.

Rows are segments ascending by milepost, columns intervals ascending in
time. The grayscale image scales the finite values linearly onto 0..255;
absent cells are 0, and a grid whose values are all equal renders all 0.
"""

import base64
import csv
import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Optional

import numpy as np

from .aggregate import CellValues
from .base import Renderer
from .delimited import format_value
from .exceptions import UnknownMetricError
from .route import Direction

if TYPE_CHECKING:
    from .base import StrPath

logger = logging.getLogger(__name__)

MAX_PIXEL = 255


@dataclass(frozen=True)
class HeatmapGrid:
    metric: str
    direction: Direction
    segments: list[int]
    intervals: list[int]
    # NaN marks absent cells
    values: np.ndarray

    @property
    def value_range(self) -> Optional[tuple[float, float]]:
        finite = self.values[np.isfinite(self.values)]
        if finite.size == 0:
            return None
        return float(finite.min()), float(finite.max())


def build_heatmap(
    columns: list[str],
    cells: CellValues,
    metric: str,
    direction: Direction,
    segment_count: Optional[int] = None,
) -> HeatmapGrid:
    """Lay out `metric` over every segment and the table's full interval span."""
    if metric not in columns:
        raise UnknownMetricError(metric, columns)
    intervals = sorted({key.interval for key in cells})
    if segment_count is None:
        segment_count = 1 + max((key.segment for key in cells), default=-1)
    segments = list(range(segment_count))
    span = list(range(intervals[0], intervals[-1] + 1)) if intervals else []

    values = np.full((len(segments), len(span)), np.nan)
    for key, row in cells.items():
        value = row.get(metric)
        if key.direction != direction or value is None or key.segment >= segment_count:
            continue
        values[key.segment, key.interval - span[0]] = value
    return HeatmapGrid(metric, direction, segments, span, values)


def scale_pixels(values: np.ndarray) -> np.ndarray:
    """Linear min-max scaling to 0..255 over the finite values."""
    pixels = np.zeros(values.shape, dtype=np.uint8)
    finite = np.isfinite(values)
    if not finite.any():
        return pixels
    lo, hi = values[finite].min(), values[finite].max()
    if hi == lo:
        return pixels
    scaled = np.rint((values[finite] - lo) / (hi - lo) * MAX_PIXEL)
    pixels[finite] = scaled.astype(np.uint8)
    return pixels


def write_pgm(pixels: np.ndarray, path: "StrPath") -> None:
    """Binary PGM, one pixel per cell, first row = lowest segment."""
    height, width = pixels.shape
    header = f"P5\n{width} {height}\n{MAX_PIXEL}\n".encode("ascii")
    Path(path).write_bytes(header + np.ascontiguousarray(pixels, dtype=np.uint8).tobytes())


def write_matrix(grid: HeatmapGrid, path: "StrPath") -> None:
    with open(path, "w", encoding="utf-8", newline="") as fobj:
        writer = csv.writer(fobj, lineterminator="\n")
        writer.writerow(["segment", *grid.intervals])
        for segment, row in zip(grid.segments, grid.values):
            writer.writerow([segment, *(format_value(float(v)) for v in row)])


class HeatmapRenderer(Renderer):
    """Renderer for one metric heatmap."""

    TYPE = "heatmap"

    EXTENSIONS = {".pgm"}

    def __init__(self, grid: HeatmapGrid, name: Optional[str] = None, **properties):
        super().__init__(
            [grid], name or f"{grid.metric}_{grid.direction.value}", **properties
        )
        self.grid = grid

    def write(self, output_dir: "StrPath") -> list[Path]:
        """Write `<name>.pgm` and `<name>.csv` into `output_dir`."""
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        image, matrix = output_dir / f"{self.slug}.pgm", output_dir / f"{self.slug}.csv"
        write_pgm(scale_pixels(self.grid.values), image)
        write_matrix(self.grid, matrix)
        logger.info(
            "heatmap %s: %dx%d, range %s", self.name, *self.grid.values.shape, self.grid.value_range
        )
        return [image, matrix]

    def bounds(self) -> dict:
        lo, hi = self.grid.value_range or (None, None)
        return {"metric": self.grid.metric, "direction": self.grid.direction, "min": lo, "max": hi}

    def generate_markdown(self, report_path=None) -> str:
        try:
            from matplotlib import pyplot as plt
        except ImportError as e:
            raise ImportError("matplotlib is required for `generate_markdown`") from e  # noqa: TRY003

        grid = self.grid
        if grid.values.size == 0:
            return ""
        if report_path:
            report_folder = Path(report_path).parent
            output_file = (report_folder / self.slug).with_suffix(".png")
            output_file.parent.mkdir(exist_ok=True, parents=True)
        else:
            output_file = io.BytesIO()  # type: ignore[assignment]

        fig, ax = plt.subplots()
        image = ax.imshow(
            np.ma.masked_invalid(grid.values),
            origin="lower",
            aspect="auto",
            cmap=self.properties.get("cmap", "viridis"),
            extent=(
                grid.intervals[0] - 0.5,
                grid.intervals[-1] + 0.5,
                grid.segments[0] - 0.5,
                grid.segments[-1] + 0.5,
            ),
        )
        fig.colorbar(image, ax=ax, label=grid.metric)
        ax.set_title(self.properties.get("title", f"{grid.metric} ({grid.direction.value})"))
        ax.set_xlabel("interval")
        ax.set_ylabel("segment")
        fig.tight_layout()
        fig.savefig(output_file)
        plt.close(fig)

        if report_path:
            return f"\n![{self.name}]({output_file.relative_to(report_folder)})"

        base64_str = base64.b64encode(output_file.getvalue()).decode()  # type: ignore[attr-defined]
        return f"\n![{self.name}](data:image/png;base64,{base64_str})"
