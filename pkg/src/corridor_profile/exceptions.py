class ProfileError(Exception):
    exit_code = 3


class InputError(ProfileError):
    """Bad input files, configuration or scenario specs."""

    exit_code = 2


class InvariantError(ProfileError):
    """Internal invariant violated; never caused by user input alone."""

    exit_code = 3


class TooFewVerticesError(InputError):
    def __init__(self, direction, count):
        super().__init__(
            f"Route '{direction}' needs at least 2 vertices, got {count}."
        )


class InvalidCoordinateError(InputError):
    def __init__(self, lat, lon, where=""):
        location = f" ({where})" if where else ""
        super().__init__(f"Invalid coordinate lat={lat}, lon={lon}{location}.")


class OutOfRangeError(InputError):
    def __init__(self, milepost, route_length):
        super().__init__(
            f"Milepost {milepost} outside route [0, {route_length}] miles."
        )


class HeaderError(InputError):
    def __init__(self, path, header):
        super().__init__(f"'{path}': unexpected header '{header}'.")


class ConfigError(InputError):
    def __init__(self, message, path=None, line=None, key=None):
        parts = [str(path) if path else "<config>"]
        if line is not None:
            parts.append(f"line {line}")
        if key is not None:
            parts.append(f"key '{key}'")
        super().__init__(f"{': '.join(parts)}: {message}")


class TimestampBeforeEpochError(InputError):
    def __init__(self, timestamp, epoch_start):
        super().__init__(f"Timestamp {timestamp} precedes epoch start {epoch_start}.")


class MissingSpeedLimitError(InputError):
    def __init__(self, direction, segment):
        super().__init__(f"No speed limit covers {direction} segment {segment}.")


class GridMismatchError(InputError):
    def __init__(self, expected, got):
        super().__init__(f"Grid parameters differ: expected {expected}, got {got}.")


class UnknownMetricError(InputError):
    def __init__(self, metric, available):
        super().__init__(
            f"Unknown metric '{metric}'. Available: {', '.join(available)}."
        )


class InvalidSpecError(InputError):
    pass


class UnsupportedSpecError(InputError):
    pass


class KeyMismatchError(InvariantError):
    def __init__(self, expected, got):
        super().__init__(f"Cell key mismatch: accumulator {expected}, sample {got}.")


class EmptyCellError(InvariantError):
    def __init__(self, key):
        super().__init__(f"Cell {key} has no waypoints to finalize.")


class ZeroMeanSpeedError(ProfileError):
    def __init__(self, key):
        super().__init__(f"Cell {key} has zero mean speed; safety index undefined.")


class FileFormatError(InputError):
    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")


class InsufficientDaysError(InputError):
    def __init__(self, got, needed):
        super().__init__(f"Baseline needs at least {needed} daily tables, got {got}.")


class MissingPlaceholderError(InputError):
    def __init__(self, placeholder, template_type):
        super().__init__(f"{template_type} template has to contain '{placeholder}'.")
