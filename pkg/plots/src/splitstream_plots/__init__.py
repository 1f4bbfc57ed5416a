"""Figure rendering for splitstream experiment CSVs."""

from .figures import FigureSpec, SchemaError, build_figure, render

__all__ = ["FigureSpec", "SchemaError", "build_figure", "render"]
