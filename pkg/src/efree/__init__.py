"""Equation-free multiscale computation with healing time."""

__version__ = "0.1.0"

from . import efcore, errors, fpspectral, integrate, mcsde, mmkinetics  # noqa: F401
