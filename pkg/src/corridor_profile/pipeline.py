"""ingest -> match -> kinematics -> aggregate -> finalize."""

import logging
from collections import defaultdict
from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass, field
from multiprocessing import Pool
from typing import TYPE_CHECKING, NamedTuple, Optional

from .aggregate import (
    CellMetrics,
    GridParams,
    aggregate_journey_partials,
    aggregate_samples,
    finalize_all,
    merge_maps,
    reduce_partials,
)
from .ingest import Rejection, assemble_journeys, read_waypoints
from .kinematics import MatchedWaypoint, derive_kinematics
from .route import RouteMatcher, load_route

if TYPE_CHECKING:
    from .base import StrPath
    from .config import RunConfig
    from .ingest import Journey, WaypointRecord
    from .route import Direction, RoutePolyline

logger = logging.getLogger(__name__)

MS_PER_DAY = 86_400_000


@dataclass
class RunSummary:
    records_read: int = 0
    records_rejected: int = 0
    off_route: int = 0
    before_epoch: int = 0
    journeys: int = 0
    samples: int = 0
    cells: int = 0
    rejections: list[Rejection] = field(default_factory=list, repr=False)

    def as_dict(self) -> dict:
        summary = asdict(self)
        summary.pop("rejections")
        return summary


class ProfileResult(NamedTuple):
    metrics: list[CellMetrics]
    grid: GridParams
    summary: RunSummary


def default_epoch(records: Sequence["WaypointRecord"], utc_offset_min: int = 0) -> int:
    """Local midnight before the earliest record."""
    if not records:
        return 0
    offset = utc_offset_min * 60_000
    first = min(r.timestamp for r in records)
    return (first + offset) // MS_PER_DAY * MS_PER_DAY - offset


def _profile_chunk(args) -> tuple[dict, int, int, int]:
    journeys, polylines, config, epoch = args
    matcher = RouteMatcher(
        polylines,
        segment_length=config.segment_length_mi,
        max_offset=config.max_offset_m,
        tie_m=config.direction_tie_m,
    )
    thresholds, fuel = config.thresholds, config.fuel
    cells: dict = defaultdict(dict) if config.deterministic_mode else {}
    off_route = before_epoch = samples = 0
    for journey in journeys:
        points = journey.waypoints
        matched = matcher.match_many(
            [p.latitude for p in points],
            [p.longitude for p in points],
            [p.heading for p in points],
        )
        waypoints = [
            MatchedWaypoint(
                point,
                float(matched.milepost[i]),
                int(matched.segment[i]),
                matcher.directions[d],
            )
            for i, (point, d) in enumerate(zip(points, matched.direction_index))
            if d >= 0
        ]
        off_route += len(points) - len(waypoints)
        kinematic = [
            s for s in derive_kinematics(waypoints, thresholds, fuel) if s.timestamp >= epoch
        ]
        before_epoch += len(waypoints) - len(kinematic)
        samples += len(kinematic)
        if config.deterministic_mode:
            aggregate_journey_partials(kinematic, epoch, config.interval_min, into=cells)
        else:
            aggregate_samples(kinematic, epoch, config.interval_min, into=cells)
    return cells, off_route, before_epoch, samples


def profile_journeys(
    journeys: Sequence["Journey"],
    polylines: Mapping["Direction", "RoutePolyline"],
    config: "RunConfig",
    epoch: int,
    workers: int = 1,
) -> tuple[list[CellMetrics], RunSummary]:
    """Profile journeys split into contiguous chunks, one per worker."""
    workers = max(1, min(workers, len(journeys)))
    size = -(-len(journeys) // workers) if journeys else 0
    tasks = [
        (journeys[i : i + size], polylines, config, epoch)
        for i in range(0, len(journeys), size or 1)
    ]
    if workers > 1:
        with Pool(processes=workers) as pool:
            results = pool.map(_profile_chunk, tasks)
    else:
        results = [_profile_chunk(task) for task in tasks]

    summary = RunSummary(journeys=len(journeys))
    for _, off_route, before_epoch, samples in results:
        summary.off_route += off_route
        summary.before_epoch += before_epoch
        summary.samples += samples

    parts = [cells for cells, *_ in results]
    if config.deterministic_mode:
        cells = reduce_partials(parts)
    else:
        cells = merge_maps(parts)
    metrics = finalize_all(cells)
    summary.cells = len(metrics)
    logger.info(
        "%d journeys, %d samples, %d cells (%d off-route, %d before epoch)",
        summary.journeys,
        summary.samples,
        summary.cells,
        summary.off_route,
        summary.before_epoch,
    )
    return metrics, summary


def profile(
    waypoints_path: "StrPath",
    route_path: "StrPath",
    config: "RunConfig",
    workers: Optional[int] = None,
) -> ProfileResult:
    workers = workers or config.threads
    polylines = load_route(route_path, config.max_edge_m)
    parsed = read_waypoints(waypoints_path, workers)
    journeys = assemble_journeys(parsed.records, config.gap_split_ms)
    epoch = config.epoch_start_ms
    if epoch is None:
        epoch = default_epoch(parsed.records, config.utc_offset_min)

    metrics, summary = profile_journeys(journeys, polylines, config, epoch, workers)
    summary.records_read = len(parsed.records) + len(parsed.rejections)
    summary.records_rejected = len(parsed.rejections)
    summary.rejections = parsed.rejections
    grid = GridParams(
        segment_length_mi=config.segment_length_mi,
        interval_min=config.interval_min,
        epoch_start_ms=epoch,
        utc_offset_min=config.utc_offset_min,
        route_length_mi=max(p.route_length for p in polylines.values()),
    )
    return ProfileResult(metrics, grid, summary)
