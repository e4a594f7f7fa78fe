"""
Segment and interval traffic profiles from connected-vehicle waypoints
"""

from .heatmap import HeatmapRenderer
from .pipeline import profile  # noqa: F401
from .table import TableRenderer

RENDERERS = [HeatmapRenderer, TableRenderer]
