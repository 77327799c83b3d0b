"""Static figure rendering for the experiment runner's CSV outputs."""

__version__ = "0.1.0"

from .figures import FIGURES, FigureError, render_figures

__all__ = ["FIGURES", "FigureError", "render_figures", "__version__"]
