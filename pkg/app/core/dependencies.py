"""
Dependency injection following Dependency Inversion Principle
"""
from functools import lru_cache

from ..repositories import (
    DictionaryRepository,
    ImageRepository,
    MetricsRepository,
    ReportRepository,
    SinogramRepository,
)


@lru_cache()
def get_image_repository() -> ImageRepository:
    return ImageRepository()


@lru_cache()
def get_dictionary_repository() -> DictionaryRepository:
    return DictionaryRepository()


@lru_cache()
def get_sinogram_repository() -> SinogramRepository:
    return SinogramRepository()


@lru_cache()
def get_report_repository() -> ReportRepository:
    return ReportRepository()


@lru_cache()
def get_metrics_repository() -> MetricsRepository:
    return MetricsRepository()
