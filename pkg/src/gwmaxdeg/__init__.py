"""Maximal out-degree laws of Galton-Watson trees: exact, global and simulated."""

from __future__ import annotations

__version__ = "0.1.0"

from ._backend import BACKEND
from .offspring import (
    ConvergenceError,
    OffspringDistribution,
    OffspringError,
    OffspringSpec,
    build,
    extinction_probability,
)

__all__ = [
    "BACKEND",
    "ConvergenceError",
    "OffspringDistribution",
    "OffspringError",
    "OffspringSpec",
    "__version__",
    "build",
    "extinction_probability",
]
