"""Command-line entry point: `corridor-profile <command> ...`.

Exit codes: 0 ok, 1 usage, 2 input error, 3 internal invariant violation.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional

from .aggregate import (
    read_cell_values,
    read_metrics,
    time_of_day_profile,
    write_metrics,
)
from .baseline import (
    build_baseline,
    detect_anomalies,
    read_baseline,
    write_anomalies,
    write_baseline,
)
from .config import RunConfig, load_config
from .delimited import write_table
from .exceptions import ProfileError
from .heatmap import HeatmapRenderer, build_heatmap
from .indices import index_all, write_indexed
from .ingest import write_waypoints
from .markdown import render_markdown
from .pipeline import profile
from .route import Direction, SegmentGrid, write_route
from .synth import generate, ground_truth, load_scenario, write_ground_truth
from .table import TableRenderer

logger = logging.getLogger(__name__)

USAGE_EXIT = 1


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with 1 instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


def _echo(text: str) -> None:
    sys.stdout.write(text + "\n")


def cmd_profile(args, config: RunConfig) -> int:
    result = profile(args.waypoints, args.route, config)
    write_metrics(result.metrics, args.output, result.grid)
    if args.rejections:
        write_table(
            args.rejections,
            ["line", "reason", "raw"],
            (r._asdict() for r in result.summary.rejections),
        )
    summary = result.summary.as_dict()
    _echo(TableRenderer([summary], "run summary").to_console())
    if args.time_of_day:
        write_table(
            args.time_of_day,
            ["direction", "interval", "segments", "avg_n_vehicles"],
            time_of_day_profile(result.metrics),
        )
    return 0


def cmd_indices(args, config: RunConfig) -> int:
    metrics, grid = read_metrics(args.metrics)
    indexed = index_all(
        metrics,
        config.speed_limits(),
        config.weights,
        segment_length=grid.segment_length_mi,
        route_length=grid.route_length_mi,
        signed_speed_drop=config.signed_speed_drop,
        normalized_stability=config.normalized_stability,
    )
    count = write_indexed(indexed, args.output, grid, config.normalized_stability)
    logger.info("wrote %d indexed cells to %s", count, args.output)
    return 0


def cmd_baseline_build(args, config: RunConfig) -> int:
    tables = []
    for path in args.tables:
        grid, _, cells = read_cell_values(path)
        tables.append((grid, cells))
    min_days = args.min_days or config.baseline_min_days
    write_baseline(build_baseline(tables, min_days), args.output)
    return 0


def cmd_baseline_detect(args, config: RunConfig) -> int:
    grid, _, cells = read_cell_values(args.current)
    flags = detect_anomalies(
        (grid, cells),
        read_baseline(args.baseline),
        z_warn=config.z_warn,
        z_alert=config.z_alert,
        std_floor_frac=config.std_floor_frac,
        std_floor_min=config.std_floor_min,
    )
    write_anomalies(flags, args.output)
    counts: dict[str, int] = {}
    for flag in flags:
        counts[flag.severity.value] = counts.get(flag.severity.value, 0) + 1
    _echo(TableRenderer([counts] if counts else [], "anomaly flags").to_console())
    return 0


def cmd_render(args, config: RunConfig) -> int:  # noqa: ARG001
    grid_params, columns, cells = read_cell_values(args.table)
    segment_count = grid_params.segment_count()
    if args.route_length is not None:
        segment_count = SegmentGrid(args.route_length, grid_params.segment_length_mi).segment_count
    renderers = []
    for direction in args.direction or sorted(Direction, key=lambda d: d.value):
        grid = build_heatmap(columns, cells, args.metric, Direction(direction), segment_count)
        renderer = HeatmapRenderer(grid)
        renderer.write(args.output)
        renderers.append(renderer)

    bounds = TableRenderer([r.bounds() for r in renderers], "scaling bounds")
    bounds.write(args.output)
    _echo(bounds.to_console())
    if args.report:
        details = {"table": args.table, "metric": args.metric, **grid_params.as_meta()}
        render_markdown([*renderers, bounds], args.report, details=details)
    return 0


def cmd_synth(args, config: RunConfig) -> int:
    spec = load_scenario(args.scenario)
    result = generate(spec, workers=config.threads)
    count = write_waypoints(result.records(), args.output, units=args.units)
    if args.route:
        directions = sorted(set(spec.directions), key=lambda d: d.value)
        write_route([result.polylines[d] for d in directions], args.route)
    if args.truth:
        rows = ground_truth(
            result,
            segment_length_mi=config.segment_length_mi,
            interval_min=config.interval_min,
            epoch_start_ms=config.epoch_start_ms,
            utc_offset_min=config.utc_offset_min,
            hard_brake_max=config.hard_brake_max,
        )
        write_ground_truth(rows, args.truth)
    logger.info("wrote %d waypoints to %s", count, args.output)
    return 0


def get_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog="corridor-profile",
        description="Segment and interval traffic profiles from connected-vehicle waypoints.",
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="count", default=0)
    verbosity.add_argument("-q", "--quiet", action="store_true")
    parser.add_argument("--config", type=Path, help="Flat `key = value` run configuration.")
    parser.add_argument("--threads", type=int, help="Worker processes (overrides config).")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    cmd = commands.add_parser("profile", help="Waypoints + route -> cell metrics table.")
    cmd.add_argument("waypoints", type=Path)
    cmd.add_argument("route", type=Path)
    cmd.add_argument("-o", "--output", type=Path, required=True)
    cmd.add_argument("--rejections", type=Path, help="Write rejected lines here.")
    cmd.add_argument("--time-of-day", type=Path, help="Write vehicle counts per interval.")
    cmd.add_argument("--epoch-start", type=int, dest="epoch_start_ms")
    cmd.set_defaults(func=cmd_profile)

    cmd = commands.add_parser("indices", help="Cell metrics -> indexed table.")
    cmd.add_argument("metrics", type=Path)
    cmd.add_argument("-o", "--output", type=Path, required=True)
    cmd.add_argument("--speed-limits", type=str, dest="speed_limits_file")
    cmd.set_defaults(func=cmd_indices)

    baseline = commands.add_parser("baseline", help="Historical baselines and anomalies.")
    actions = baseline.add_subparsers(dest="action", required=True, parser_class=ArgumentParser)
    cmd = actions.add_parser("build", help="Daily cell tables -> baseline table.")
    cmd.add_argument("tables", type=Path, nargs="+")
    cmd.add_argument("-o", "--output", type=Path, required=True)
    cmd.add_argument("--min-days", type=int)
    cmd.set_defaults(func=cmd_baseline_build)
    cmd = actions.add_parser("detect", help="Current cell table + baseline -> anomalies.")
    cmd.add_argument("current", type=Path)
    cmd.add_argument("--baseline", type=Path, required=True)
    cmd.add_argument("-o", "--output", type=Path, required=True)
    cmd.set_defaults(func=cmd_baseline_detect)

    cmd = commands.add_parser("render", help="Cell table -> heatmap image and matrix.")
    cmd.add_argument("table", type=Path)
    cmd.add_argument("--metric", required=True)
    cmd.add_argument(
        "--direction", action="append", choices=[d.value for d in Direction]
    )
    cmd.add_argument("-o", "--output", type=Path, required=True, help="Output directory.")
    cmd.add_argument("--route-length", type=float, help="Corridor length in miles; defaults to the table's route_length_mi.")
    cmd.add_argument("--report", type=Path, help="Also write a markdown report.")
    cmd.set_defaults(func=cmd_render)

    cmd = commands.add_parser("synth", help="Scenario file -> synthetic waypoints.")
    cmd.add_argument("scenario", type=Path)
    cmd.add_argument("-o", "--output", type=Path, required=True)
    cmd.add_argument("--route", type=Path, help="Also write the corridor geometry.")
    cmd.add_argument("--truth", type=Path, help="Also write the ground-truth table.")
    cmd.add_argument("--units", choices=["mps", "mph"], default="mps")
    cmd.set_defaults(func=cmd_synth)
    return parser


def setup_logging(verbose: int = 0, quiet: bool = False) -> None:
    level = logging.WARNING
    if quiet:
        level = logging.ERROR
    elif verbose:
        level = logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(
        level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )


def main(argv: Optional[list[str]] = None) -> int:
    args = get_parser().parse_args(argv)
    setup_logging(args.verbose, args.quiet)
    overrides = {
        "threads": args.threads,
        "epoch_start_ms": getattr(args, "epoch_start_ms", None),
        "speed_limits_file": getattr(args, "speed_limits_file", None),
    }
    try:
        config = load_config(args.config, **overrides)
        return args.func(args, config)
    except ProfileError as exc:
        logger.debug("command failed", exc_info=True)
        sys.stderr.write(f"error: {exc}\n")
        return exc.exit_code
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
