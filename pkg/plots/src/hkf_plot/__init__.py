"""Figure rendering for hkf experiment CSV outputs."""

__version__ = "0.1.0"

from .render import FigureSpec, SchemaMismatchError, render

__all__ = ["FigureSpec", "SchemaMismatchError", "render"]
