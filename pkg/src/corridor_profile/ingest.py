"""Waypoint file parsing and journey assembly."""

import logging
import math
from collections import defaultdict
from collections.abc import Iterable
from dataclasses import dataclass, field
from multiprocessing import Pool
from pathlib import Path
from typing import TYPE_CHECKING, NamedTuple, Optional, Union

from .exceptions import HeaderError

if TYPE_CHECKING:
    from .base import StrPath

logger = logging.getLogger(__name__)

MPH_TO_MPS = 0.44704
DEFAULT_GAP_SPLIT_MS = 30_000
HEADER_PREFIX = ("journey_id", "timestamp_ms", "lat", "lon")
SPEED_UNITS = {"speed_mps": 1.0, "speed_mph": MPH_TO_MPS}
HEADING_COLUMN = "heading_deg"
FIELD_COUNT = 6


class WaypointRecord(NamedTuple):
    journey_id: str
    timestamp: int
    latitude: float
    longitude: float
    speed: float
    heading: float


class Rejection(NamedTuple):
    line: int
    reason: str
    raw: str


@dataclass
class Journey:
    journey_id: str
    waypoints: list[WaypointRecord] = field(default_factory=list)


class ParseResult(NamedTuple):
    records: list[WaypointRecord]
    rejections: list[Rejection]
    speed_factor: Optional[float]


def parse_header(line: str, path: "StrPath" = "<stream>") -> float:
    """Return the speed conversion factor selected by the header."""
    columns = tuple(c.strip() for c in line.split(","))
    if (
        len(columns) != FIELD_COUNT
        or columns[:4] != HEADER_PREFIX
        or columns[4] not in SPEED_UNITS
        or columns[5] != HEADING_COLUMN
    ):
        raise HeaderError(path, line)
    return SPEED_UNITS[columns[4]]


def _parse_float(name: str, value: str) -> float:
    try:
        number = float(value)
    except ValueError:
        raise ValueError(f"unparsable {name} '{value}'") from None
    if not math.isfinite(number):
        raise ValueError(f"non-finite {name}")
    return number


def parse_line(line: str, speed_factor: float) -> WaypointRecord:
    fields = line.split(",")
    if len(fields) != FIELD_COUNT:
        raise ValueError(f"expected {FIELD_COUNT} fields, got {len(fields)}")
    journey_id = fields[0].strip()
    if not journey_id:
        raise ValueError("empty journey_id")
    try:
        timestamp = int(fields[1])
    except ValueError:
        raise ValueError(f"unparsable timestamp_ms '{fields[1]}'") from None
    lat = _parse_float("lat", fields[2])
    lon = _parse_float("lon", fields[3])
    speed = _parse_float("speed", fields[4])
    heading = _parse_float("heading", fields[5])

    if timestamp < 0:
        raise ValueError("timestamp out of range")
    if not -90 <= lat <= 90:
        raise ValueError("lat out of range")
    if not -180 <= lon <= 180:
        raise ValueError("lon out of range")
    if speed < 0:
        raise ValueError("speed out of range")
    if not 0 <= heading < 360:
        raise ValueError("heading out of range")
    return WaypointRecord(journey_id, timestamp, lat, lon, speed * speed_factor, heading)


def _lines(data: Union[bytes, Iterable[bytes]]) -> Iterable[bytes]:
    if isinstance(data, (bytes, bytearray)):
        lines = bytes(data).split(b"\n")
        if lines and lines[-1] == b"":
            lines.pop()
        return lines
    return (chunk.rstrip(b"\n") for chunk in data)


def parse_records(
    data: Union[bytes, Iterable[bytes]],
    speed_factor: Optional[float] = None,
    first_line: int = 1,
    path: "StrPath" = "<stream>",
) -> ParseResult:
    """Parse waypoint lines into records and per-line rejections.

    Without `speed_factor` the first non-comment line must be the header.
    Every other non-comment line ends up either as a record or as a
    rejection tagged with its line number.
    """
    records: list[WaypointRecord] = []
    rejections: list[Rejection] = []
    for lineno, raw in enumerate(_lines(data), start=first_line):
        try:
            line = raw.rstrip(b"\r").decode("utf-8")
        except UnicodeDecodeError:
            rejections.append(Rejection(lineno, "invalid UTF-8", repr(raw)))
            continue
        if line.startswith("#"):
            continue
        if speed_factor is None:
            speed_factor = parse_header(line, path)
            continue
        if not line.strip():
            rejections.append(Rejection(lineno, "empty line", line))
            continue
        try:
            records.append(parse_line(line, speed_factor))
        except ValueError as exc:
            rejections.append(Rejection(lineno, str(exc), line))
    return ParseResult(records, rejections, speed_factor)


def split_chunks(data: bytes, chunks: int, first_line: int = 1) -> list[tuple[bytes, int]]:
    """Split `data` at line boundaries into about `chunks` pieces."""
    if chunks <= 1 or not data:
        return [(data, first_line)]
    size = max(1, len(data) // chunks)
    pieces = []
    start, line = 0, first_line
    while start < len(data):
        end = data.find(b"\n", min(start + size, len(data)) - 1)
        end = len(data) if end < 0 else end + 1
        piece = data[start:end]
        pieces.append((piece, line))
        line += piece.count(b"\n")
        start = end
    return pieces


def _parse_chunk(args: tuple[bytes, int, float, str]) -> ParseResult:
    data, first_line, speed_factor, path = args
    return parse_records(data, speed_factor, first_line, path)


def read_waypoints(path: "StrPath", workers: int = 1) -> ParseResult:
    """Parse a waypoint file, in parallel chunks when `workers` > 1."""
    data = Path(path).read_bytes()
    offset, lineno = 0, 1
    speed_factor = None
    while offset < len(data):
        end = data.find(b"\n", offset)
        end = len(data) if end < 0 else end + 1
        line = data[offset:end].rstrip(b"\r\n").decode("utf-8", errors="replace")
        offset, lineno = end, lineno + 1
        if not line.startswith("#"):
            speed_factor = parse_header(line, path)
            break
    if speed_factor is None:
        return ParseResult([], [], None)

    chunks = split_chunks(data[offset:], workers, lineno)
    tasks = [(chunk, first, speed_factor, str(path)) for chunk, first in chunks]
    if workers > 1 and len(tasks) > 1:
        with Pool(processes=workers) as pool:
            results = pool.map(_parse_chunk, tasks)
    else:
        results = [_parse_chunk(task) for task in tasks]

    records = [r for result in results for r in result.records]
    rejections = [r for result in results for r in result.rejections]
    logger.info(
        "%s: %d records, %d rejected", path, len(records), len(rejections)
    )
    return ParseResult(records, rejections, speed_factor)


def assemble_journeys(
    records: Iterable[WaypointRecord], gap_split: int = DEFAULT_GAP_SPLIT_MS
) -> list[Journey]:
    """Group records into time-ordered journeys.

    Duplicate timestamps keep the first record seen. A gap longer than
    `gap_split` ms starts a new journey; split journeys are suffixed
    `#0`, `#1`, ...
    """
    grouped: dict[str, list[WaypointRecord]] = defaultdict(list)
    for record in records:
        grouped[record.journey_id].append(record)

    journeys = []
    for journey_id, points in grouped.items():
        points.sort(key=lambda r: r.timestamp)
        pieces: list[list[WaypointRecord]] = [[]]
        last = None
        for point in points:
            if last is not None:
                if point.timestamp == last.timestamp:
                    continue
                if point.timestamp - last.timestamp > gap_split:
                    pieces.append([])
            pieces[-1].append(point)
            last = point
        if len(pieces) == 1:
            journeys.append(Journey(journey_id, pieces[0]))
        else:
            for i, piece in enumerate(pieces):
                split_id = f"{journey_id}#{i}"
                journeys.append(
                    Journey(split_id, [p._replace(journey_id=split_id) for p in piece])
                )
    journeys.sort(key=lambda j: j.journey_id)
    return journeys


def write_waypoints(
    records: Iterable[WaypointRecord], path: "StrPath", units: str = "mps"
) -> int:
    """Write records in the waypoint file format; returns the record count."""
    column = f"speed_{units}"
    factor = SPEED_UNITS[column]
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fobj:
        fobj.write(",".join((*HEADER_PREFIX, column, HEADING_COLUMN)) + "\n")
        for r in records:
            speed = r.speed if factor == 1.0 else r.speed / factor
            fobj.write(
                f"{r.journey_id},{r.timestamp},{r.latitude!r},{r.longitude!r},"
                f"{speed!r},{r.heading!r}\n"
            )
            count += 1
    return count
