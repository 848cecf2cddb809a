"""Figure rendering for experiment summary files."""

from plotkit.render import (
    DEFAULT_LABELS,
    PlotSpec,
    load_summary,
    render_curves,
    select_series,
)

__all__ = [
    "DEFAULT_LABELS",
    "PlotSpec",
    "load_summary",
    "render_curves",
    "select_series",
]
