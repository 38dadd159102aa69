"""Offline figure generation from ncqfsim output directories."""

__version__ = "0.1.0"

from .figures import FigureSpec, SchemaError, plot

__all__ = ["FigureSpec", "SchemaError", "plot", "__version__"]
