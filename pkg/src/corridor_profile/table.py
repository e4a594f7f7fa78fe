from pathlib import Path

from .base import Renderer
from .delimited import write_table
from .utils import list_dict_to_dict_list

try:
    from tabulate import tabulate
except ImportError:
    tabulate = None


class TableRenderer(Renderer):
    """Renderer for run summaries, scaling bounds and anomaly lists."""

    TYPE = "table"

    EXTENSIONS = {".csv"}

    @classmethod
    def to_tabulate(cls, datapoints, tablefmt):
        """Convert datapoints to tabulate format"""
        if tabulate is None:
            raise ImportError(f"{cls.__name__} requires `tabulate`.")  # noqa: TRY003
        data = list_dict_to_dict_list(datapoints)
        return tabulate(data, headers="keys", tablefmt=tablefmt)

    def to_console(self) -> str:
        if not self.datapoints:
            return f"{self.name}: (empty)"
        table = self.to_tabulate(self.datapoints, tablefmt="simple")
        return f"{self.name}\n{table}" if self.name else table

    def write(self, output_dir) -> list[Path]:
        """Write the flattened rows to `<slug>.csv`; an empty table writes nothing."""
        columns = list_dict_to_dict_list(self.datapoints)
        if not columns:
            return []
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        path = output_dir / f"{self.slug}.csv"
        rows = [dict(zip(columns, values)) for values in zip(*columns.values())]
        write_table(path, list(columns), rows)
        return [path]

    def generate_markdown(self, report_path=None) -> str:  # noqa: ARG002
        if not self.datapoints:
            return f"\n{self.name}\n\n_No rows._"
        table = self.to_tabulate(self.datapoints, tablefmt="github")
        return f"\n{self.name}\n\n{table}"
