"""Core module for configuration, errors and dependencies"""
from .config import Settings, get_settings
from .errors import (
    PatchRecError,
    ShapeMismatchError,
    GridError,
    PatchIndexError,
    FileFormatError,
    ConfigurationError,
    TrainingDataError,
    SolverDivergenceError,
    InvalidDataError,
)

__all__ = [
    "Settings",
    "get_settings",
    "PatchRecError",
    "ShapeMismatchError",
    "GridError",
    "PatchIndexError",
    "FileFormatError",
    "ConfigurationError",
    "TrainingDataError",
    "SolverDivergenceError",
    "InvalidDataError",
]
