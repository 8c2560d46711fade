"""Figure rendering over the planner's metrics and roadmap files."""
from .figures import PlotSpec, render
from .formats import ReportError, read_instance, read_metrics, read_roadmap, read_solution

__all__ = [
    "PlotSpec",
    "ReportError",
    "read_instance",
    "read_metrics",
    "read_roadmap",
    "read_solution",
    "render",
]
