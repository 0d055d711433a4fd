"""Repository layer for artifact files"""
from .base import IRepository, BaseRepository
from .repositories import (
    ImageRepository,
    DictionaryRepository,
    SinogramRepository,
    ReportRepository,
    MetricsRepository,
    default_image_size,
)

__all__ = [
    "IRepository",
    "BaseRepository",
    "ImageRepository",
    "DictionaryRepository",
    "SinogramRepository",
    "ReportRepository",
    "MetricsRepository",
    "default_image_size",
]
