"""
Parallel-beam tomography: Joseph projector with its exact transpose, FBP baseline,
sinogram noise and the DPC cos/sin splitting
"""
import math
from functools import lru_cache
from typing import Literal, Tuple

import numpy as np
from scipy import sparse

from .base import IForwardOperator
from ..core.errors import ConfigurationError, ShapeMismatchError
from ..models import Image, Sinogram
from ..schemas import Geometry, uniform_angles


class JosephProjector:
    """
    Joseph's method as a sparse (n_angles * n_detectors, N * N) matrix.
    Each ray is sampled once per row (or column, whichever is its major
    axis) with linear interpolation across the minor axis; backprojection
    is the transposed matrix.
    """

    def __init__(self, geometry: Geometry):
        self.geometry = geometry
        self.matrix = self._build_matrix()
        self._matrix_t = self.matrix.T.tocsr()

    def _build_matrix(self) -> sparse.csr_matrix:
        g = self.geometry
        N = g.image_size
        center = (N - 1) / 2.0
        t = (np.arange(g.n_detectors) - g.center) * g.detector_spacing
        major = np.arange(N)

        rows, cols, vals = [], [], []
        for a, theta in enumerate(g.angles):
            cos, sin = math.cos(theta), math.sin(theta)
            ray = a * g.n_detectors + np.arange(g.n_detectors)
            along_rows = abs(cos) >= abs(sin)
            if along_rows:
                # y fixed per row i, solve x cos + y sin = t for the column
                position = (t[:, None] - (major[None, :] - center) * sin) / cos + center
                length = 1.0 / abs(cos)
            else:
                position = (t[:, None] - (major[None, :] - center) * cos) / sin + center
                length = 1.0 / abs(sin)
            lower = np.floor(position).astype(np.int64)
            frac = position - lower
            for minor, weight in ((lower, 1.0 - frac), (lower + 1, frac)):
                keep = (minor >= 0) & (minor < N) & (weight > 0)
                ray_idx = np.broadcast_to(ray[:, None], keep.shape)[keep]
                major_idx = np.broadcast_to(major[None, :], keep.shape)[keep]
                minor_idx = minor[keep]
                pixel = major_idx * N + minor_idx if along_rows else minor_idx * N + major_idx
                rows.append(ray_idx)
                cols.append(pixel)
                vals.append(weight[keep] * length)

        shape = (g.n_angles * g.n_detectors, N * N)
        if not rows:
            return sparse.csr_matrix(shape)
        matrix = sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=shape
        )
        return matrix.tocsr()

    def forward(self, plane: np.ndarray) -> np.ndarray:
        """(N, N) -> (n_angles, n_detectors)"""
        g = self.geometry
        if plane.shape != (g.image_size, g.image_size):
            raise ShapeMismatchError(f"image {plane.shape} does not match geometry side {g.image_size}")
        return (self.matrix @ plane.ravel()).reshape(g.n_angles, g.n_detectors)

    def backward(self, rows: np.ndarray) -> np.ndarray:
        """(n_angles, n_detectors) -> (N, N), exact adjoint of forward"""
        g = self.geometry
        if rows.shape != (g.n_angles, g.n_detectors):
            raise ShapeMismatchError(f"sinogram {rows.shape} does not match geometry")
        return (self._matrix_t @ rows.ravel()).reshape(g.image_size, g.image_size)

    def norm_bound(self) -> float:
        """sqrt(||P||_1 ||P||_inf) >= ||P||_2"""
        abs_matrix = abs(self.matrix)
        col_max = abs_matrix.sum(axis=0).max()
        row_max = abs_matrix.sum(axis=1).max()
        return float(math.sqrt(col_max * row_max))


@lru_cache(maxsize=8)
def _cached_projector(geometry_json: str) -> JosephProjector:
    return JosephProjector(Geometry.model_validate_json(geometry_json))


def get_projector(geometry: Geometry) -> JosephProjector:
    """Projector for a geometry, built once per distinct geometry"""
    return _cached_projector(geometry.model_dump_json())


class IdentityOperator(IForwardOperator):
    """P = identity (denoising)"""

    kind = "identity"

    def apply(self, x: np.ndarray) -> np.ndarray:
        return x

    def adjoint(self, data: np.ndarray) -> np.ndarray:
        return data

    def norm_bound(self) -> float:
        return 1.0


class TomographicOperator(IForwardOperator):
    """Channel-wise Joseph projection; each channel has its own sinogram"""

    kind = "tomographic"

    def __init__(self, geometry: Geometry):
        self.geometry = geometry
        self.projector = get_projector(geometry)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return np.stack([self.projector.forward(plane) for plane in x])

    def adjoint(self, data: np.ndarray) -> np.ndarray:
        return np.stack([self.projector.backward(rows) for rows in data])

    def norm_bound(self) -> float:
        return self.projector.norm_bound()


def _check_geometry(img: Image, geom: Geometry) -> None:
    if img.width != geom.image_size or img.height != geom.image_size:
        raise ShapeMismatchError(
            f"image {img.width}x{img.height} does not match geometry side {geom.image_size}"
        )


def project(img: Image, geom: Geometry) -> Sinogram:
    """Discrete Radon transform, channel-wise"""
    _check_geometry(img, geom)
    return Sinogram(geom, TomographicOperator(geom).apply(img.samples))


def backproject(sino: Sinogram, geom: Geometry) -> Image:
    """Exact adjoint of ``project``"""
    if sino.geometry != geom:
        raise ShapeMismatchError("sinogram geometry differs from the requested geometry")
    return Image(TomographicOperator(geom).adjoint(sino.samples))


def _ramp_filter(n_detectors: int, kind: Literal["ramlak", "hann"]) -> Tuple[np.ndarray, int]:
    """Frequency response of the spatially sampled ramp on a power-of-two grid"""
    size = max(64, 1 << int(math.ceil(math.log2(2 * n_detectors))))
    k = np.concatenate([np.arange(1, size // 2 + 1, 2), np.arange(size // 2 - 1, 0, -2)])
    h = np.zeros(size)
    h[0] = 0.25
    h[1::2] = -1.0 / (np.pi * k) ** 2
    response = np.real(np.fft.fft(h))
    if kind == "hann":
        response *= 0.5 + 0.5 * np.cos(2.0 * np.pi * np.fft.fftfreq(size))
    elif kind != "ramlak":
        raise ConfigurationError(f"unknown FBP filter '{kind}'")
    return response, size


def fbp(sino: Sinogram, geom: Geometry, filter: Literal["ramlak", "hann"] = "ramlak") -> Image:
    """Filtered back-projection, channel-wise"""
    if geom.n_angles < 2:
        raise ConfigurationError("FBP needs at least two projection angles")
    if sino.geometry != geom:
        raise ShapeMismatchError("sinogram geometry differs from the requested geometry")

    response, size = _ramp_filter(geom.n_detectors, filter)
    N = geom.image_size
    center = (N - 1) / 2.0
    coords = np.arange(N) - center
    xx, yy = np.meshgrid(coords, coords, indexing="xy")
    detector = np.arange(geom.n_detectors)

    planes = []
    for rows in sino.samples:
        padded = np.zeros((geom.n_angles, size))
        padded[:, :geom.n_detectors] = rows
        filtered = np.real(np.fft.ifft(np.fft.fft(padded, axis=1) * response, axis=1))
        filtered = filtered[:, :geom.n_detectors] / geom.detector_spacing

        recon = np.zeros((N, N))
        for theta, row in zip(geom.angles, filtered):
            u = (xx * math.cos(theta) + yy * math.sin(theta)) / geom.detector_spacing + geom.center
            recon += np.interp(u.ravel(), detector, row, left=0.0, right=0.0).reshape(N, N)
        planes.append(recon * np.pi / geom.n_angles)
    return Image(np.stack(planes))


def split_dpc(sino: Sinogram) -> Tuple[Sinogram, Sinogram]:
    """Rows weighted by cos(theta) (X) and sin(theta) (Y)"""
    if sino.channels != 1:
        raise ShapeMismatchError("DPC splitting expects a scalar sinogram")
    angles = sino.angles[:, None]
    return (
        Sinogram(sino.geometry, sino.samples * np.cos(angles)),
        Sinogram(sino.geometry, sino.samples * np.sin(angles)),
    )


def combine_dpc(sino_x: Sinogram, sino_y: Sinogram) -> Sinogram:
    """DPC signal cos(theta) Sx + sin(theta) Sy"""
    if sino_x.geometry != sino_y.geometry:
        raise ShapeMismatchError("X and Y sinograms use different geometries")
    if sino_x.channels != 1 or sino_y.channels != 1:
        raise ShapeMismatchError("DPC combination expects scalar sinograms")
    angles = sino_x.angles[:, None]
    return Sinogram(
        sino_x.geometry, sino_x.samples * np.cos(angles) + sino_y.samples * np.sin(angles)
    )


def stack_channels(*sinograms: Sinogram) -> Sinogram:
    """Scalar sinograms sharing a geometry -> one multi-channel sinogram"""
    geometry = sinograms[0].geometry
    if any(s.geometry != geometry for s in sinograms):
        raise ShapeMismatchError("sinograms use different geometries")
    return Sinogram(geometry, np.concatenate([s.samples for s in sinograms]))


def add_noise(sino: Sinogram, sigma_frac: float, seed: int = 0) -> Sinogram:
    """I.i.d. gaussian noise with sigma = sigma_frac * max |sinogram|"""
    if sigma_frac < 0:
        raise ConfigurationError("sigma_frac must be non-negative")
    if sigma_frac == 0:
        return Sinogram(sino.geometry, sino.samples.copy())
    sigma = sigma_frac * float(np.max(np.abs(sino.samples)))
    rng = np.random.default_rng(seed)
    return Sinogram(sino.geometry, sino.samples + rng.normal(0.0, sigma, sino.samples.shape))
