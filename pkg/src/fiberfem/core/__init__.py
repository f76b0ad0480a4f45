"""Core infrastructure modules."""

from .config import Settings, get_settings, settings
from .exceptions import (
    AssemblyError,
    ConfigurationError,
    ConvergenceError,
    DataFileError,
    FiberFemError,
    InversionError,
    LinearSolverError,
    MeshError,
)
from .logging import get_logger, setup_logging

__all__ = [
    "Settings",
    "settings",
    "get_settings",
    "get_logger",
    "setup_logging",
    "FiberFemError",
    "ConfigurationError",
    "MeshError",
    "AssemblyError",
    "LinearSolverError",
    "ConvergenceError",
    "InversionError",
    "DataFileError",
]
