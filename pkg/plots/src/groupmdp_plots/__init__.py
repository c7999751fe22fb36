"""Figure rendering for groupmdp harness CSVs."""

from .render import PlotSpec, SchemaError, render

__version__ = "0.1.0"
