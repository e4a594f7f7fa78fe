from enum import Enum

from flatten_dict import flatten  # type: ignore[import]


def _plain(value):
    return value.value if isinstance(value, Enum) else value


def list_dict_to_dict_list(list_dict):
    """Convert from list of (possibly nested) rows to dictionary of columns.

    Nested keys are joined with dots; enum members are replaced by their value.
    """
    if not list_dict:
        return {}
    flat_list_dict = [flatten(d, reducer="dot") for d in list_dict]
    columns = {k: None for row in flat_list_dict for k in row}
    return {k: [_plain(row.get(k)) for row in flat_list_dict] for k in columns}
