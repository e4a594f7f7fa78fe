"""Comma-separated tables with an optional `# key=value ...` metadata line."""

import csv
import io
import math
from collections.abc import Callable, Iterable, Mapping, Sequence
from pathlib import Path
from typing import TYPE_CHECKING, Any, Optional, TypeVar

from .exceptions import FileFormatError

if TYPE_CHECKING:
    from .base import StrPath

T = TypeVar("T")


class Row(dict):
    """Raw column values of one table line."""

    line: int = 0


def format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else ""
    if hasattr(value, "value"):  # enums
        return str(value.value)
    return str(value)


def write_table(
    path: "StrPath",
    header: Sequence[str],
    rows: Iterable[Mapping[str, Any]],
    meta: Optional[Mapping[str, Any]] = None,
) -> int:
    count = 0
    with open(path, "w", encoding="utf-8", newline="") as fobj:
        if meta:
            items = " ".join(f"{k}={format_value(v)}" for k, v in meta.items())
            fobj.write(f"# {items}\n")
        writer = csv.writer(fobj, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(row.get(column)) for column in header])
            count += 1
    return count


def read_text(path: "StrPath") -> str:
    """UTF-8 text of `path`; undecodable bytes are reported with their line."""
    data = Path(path).read_bytes()
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        line = data.count(b"\n", 0, exc.start) + 1
        raise FileFormatError(path, line, "invalid UTF-8") from exc


def read_table(
    path: "StrPath", required: Sequence[str] = ()
) -> tuple[dict[str, str], list[str], list[Row]]:
    """Return (metadata, header, rows); rows map column name to raw text."""
    meta: dict[str, str] = {}
    lines = []
    for lineno, line in enumerate(io.StringIO(read_text(path), newline=""), start=1):
        if line.startswith("#"):
            for item in line[1:].split():
                key, sep, value = item.partition("=")
                if sep:
                    meta[key] = value
            continue
        lines.append((lineno, line))

    if not lines:
        raise FileFormatError(path, 0, "missing header")
    rows = []
    header: list[str] = []
    try:
        reader = csv.reader(line for _, line in lines)
        header = next(reader)
        missing = [c for c in required if c not in header]
        if missing:
            raise FileFormatError(path, lines[0][0], f"missing columns {missing}")
        for (lineno, _), values in zip(lines[1:], reader):
            if len(values) != len(header):
                raise FileFormatError(
                    path, lineno, f"expected {len(header)} fields, got {len(values)}"
                )
            row = Row(zip(header, values))
            row.line = lineno
            rows.append(row)
    except csv.Error as exc:
        index = len(rows) + (1 if header else 0)
        lineno = lines[min(index, len(lines) - 1)][0]
        raise FileFormatError(path, lineno, str(exc)) from exc
    return meta, header, rows


def parse_number(path: "StrPath", row: Row, column: str, kind=float):
    """Optional numeric column; blank reads as None."""
    raw = row.get(column, "")
    if raw == "":
        return None
    try:
        return kind(raw)
    except ValueError as exc:
        raise FileFormatError(path, row.line, f"column {column}: {exc}") from exc


def parse_field(path: "StrPath", row: Row, column: str, kind: Callable[[str], T]) -> T:
    """Required column converted by `kind` (a number type or an enum)."""
    raw = row.get(column, "")
    if raw == "":
        raise FileFormatError(path, row.line, f"column {column}: missing value")
    try:
        return kind(raw)
    except ValueError as exc:
        raise FileFormatError(path, row.line, f"column {column}: {exc}") from exc


def parse_meta(
    path: "StrPath", meta: Mapping[str, str], key: str, kind: Callable[[str], T], default: T
) -> T:
    if not meta.get(key):
        return default
    try:
        return kind(meta[key])
    except ValueError as exc:
        raise FileFormatError(path, 1, f"metadata {key}: {exc}") from exc
