"""Shared fixtures for the test suite"""
import numpy as np
import pytest

from app.models import Dictionary, Image
from app.schemas import Geometry
from app.services.phantoms import texture_image


def orthonormal_dictionary(m: int, channels: int = 1, seed: int = 0) -> Dictionary:
    """Complete orthonormal dictionary whose atom 0 is the constant atom"""
    L = channels * m * m
    rng = np.random.default_rng(seed)
    basis = rng.standard_normal((L, L))
    basis[:, 0] = 1.0
    q, r = np.linalg.qr(basis)
    q = q * np.sign(np.diag(r))
    return Dictionary.from_flat(q.T, m, channels)


def random_dictionary(n_atoms: int, m: int, channels: int = 1, seed: int = 0) -> Dictionary:
    """Unit-norm gaussian atoms"""
    rng = np.random.default_rng(seed)
    flat = rng.standard_normal((n_atoms, channels * m * m))
    flat /= np.linalg.norm(flat, axis=1, keepdims=True)
    return Dictionary.from_flat(flat, m, channels)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def texture32() -> Image:
    return texture_image(32, seed=3)


@pytest.fixture
def small_geometry() -> Geometry:
    return Geometry.parallel(16, 12)


@pytest.fixture
def geometries():
    return [
        Geometry.parallel(16, 12),
        Geometry.parallel(20, 7, n_detectors=31, detector_spacing=1.0),
        Geometry(image_size=12, angles=[0.0, 0.4, 1.1, 1.6, 2.9], n_detectors=19, detector_spacing=0.9,
                 rotation_center=8.7),
    ]
