"""Publication-style figure panels from the magnetometry simulator's CSVs."""

from plotkit.panels import PANEL_KINDS, PanelSpec, render
from plotkit.schema import SchemaError

__all__ = ["PANEL_KINDS", "PanelSpec", "render", "SchemaError"]
__version__ = "0.1.0"
