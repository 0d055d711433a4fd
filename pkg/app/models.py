"""
Numpy-backed domain types shared by all services.

Images and patch blocks are channel-planar: an image is a ``(C, H, W)``
array and a patch block a ``(C, m, m)`` array, so a flattened vectorial
patch is the X component followed by the Y component.
"""
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from .core.errors import InvalidDataError, ShapeMismatchError
from .schemas import Geometry

# Coefficients w_{kp}, patch-major: shape (n_patches, n_atoms)
CoefficientTensor = np.ndarray


def _as_planar(samples) -> np.ndarray:
    array = np.asarray(samples, dtype=np.float64)
    if array.ndim == 2:
        array = array[np.newaxis]
    if array.ndim != 3:
        raise ShapeMismatchError(f"expected a (C, H, W) raster, got shape {array.shape}")
    return np.ascontiguousarray(array)


@dataclass(frozen=True, eq=False)
class Image:
    """Dense 2D raster with 1 (scalar) or 2 (vectorial gradient field) channels"""

    samples: np.ndarray

    def __post_init__(self):
        array = _as_planar(self.samples)
        if array.shape[0] not in (1, 2):
            raise ShapeMismatchError(f"images carry 1 or 2 channels, got {array.shape[0]}")
        if not np.all(np.isfinite(array)):
            raise InvalidDataError("image samples must be finite")
        array.setflags(write=False)
        object.__setattr__(self, "samples", array)

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def height(self) -> int:
        return self.samples.shape[1]

    @property
    def width(self) -> int:
        return self.samples.shape[2]

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.samples.shape

    def channel(self, c: int) -> np.ndarray:
        return self.samples[c]

    @classmethod
    def zeros(cls, width: int, height: int, channels: int = 1) -> "Image":
        return cls(np.zeros((channels, height, width)))

    @classmethod
    def stack(cls, *planes: np.ndarray) -> "Image":
        """Build a multi-channel image from 2D planes"""
        return cls(np.stack([np.asarray(p, dtype=np.float64) for p in planes]))


@dataclass(frozen=True, eq=False)
class PatchGrid:
    """Geometry of (possibly overlapping) m x m patches covering an image"""

    image_width: int
    image_height: int
    patch_size: int
    step: int
    origins: np.ndarray  # (P, 2) integer corners r_p as (row, col), row-major p
    core_map: np.ndarray  # (H, W) index of the patch whose core holds the pixel
    overlap_count: np.ndarray  # (H, W) number of patches covering the pixel

    @property
    def n_patches(self) -> int:
        return self.origins.shape[0]

    def indicator(self, p: int) -> np.ndarray:
        """Boolean map of 1_p"""
        mask = np.zeros((self.image_height, self.image_width), dtype=bool)
        r, c = self.origins[p]
        m = self.patch_size
        mask[r:r + m, c:c + m] = True
        return mask

    def core_indicator(self, p: int) -> np.ndarray:
        """Boolean map of 1^c_p"""
        return self.core_map == p

    def center(self, p: int) -> Tuple[int, int]:
        r, c = self.origins[p]
        half = self.patch_size // 2
        return int(r + half), int(c + half)


@dataclass(frozen=True, eq=False)
class Dictionary:
    """K atoms over the patch support, each a (C, m, m) block"""

    atoms: np.ndarray  # (K, C, m, m)

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=np.float64)
        if atoms.ndim != 4 or atoms.shape[2] != atoms.shape[3]:
            raise ShapeMismatchError(f"atoms must have shape (K, C, m, m), got {atoms.shape}")
        if atoms.shape[1] not in (1, 2):
            raise ShapeMismatchError(f"atoms carry 1 or 2 channels, got {atoms.shape[1]}")
        if not np.all(np.isfinite(atoms)):
            raise InvalidDataError("dictionary atoms must be finite")
        atoms = np.ascontiguousarray(atoms)
        atoms.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[0]

    @property
    def channels(self) -> int:
        return self.atoms.shape[1]

    @property
    def patch_size(self) -> int:
        return self.atoms.shape[2]

    @property
    def signal_length(self) -> int:
        return self.channels * self.patch_size ** 2

    @property
    def flat(self) -> np.ndarray:
        """Atoms as rows of a (K, C*m*m) matrix"""
        return self.atoms.reshape(self.n_atoms, -1)

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.flat, axis=1)

    def is_normalized(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(self.norms() - 1.0) <= tol))

    @classmethod
    def from_flat(cls, flat: np.ndarray, patch_size: int, channels: int = 1) -> "Dictionary":
        flat = np.asarray(flat, dtype=np.float64)
        return cls(flat.reshape(flat.shape[0], channels, patch_size, patch_size))


@dataclass(frozen=True, eq=False)
class Sinogram:
    """Projection data, shape (C, n_angles, n_detectors)"""

    geometry: Geometry
    samples: np.ndarray

    def __post_init__(self):
        array = _as_planar(self.samples)
        expected = (self.geometry.n_angles, self.geometry.n_detectors)
        if array.shape[1:] != expected:
            raise ShapeMismatchError(
                f"sinogram samples {array.shape[1:]} do not match geometry {expected}"
            )
        if array.shape[0] not in (1, 2):
            raise ShapeMismatchError(f"sinograms carry 1 or 2 channels, got {array.shape[0]}")
        if not np.all(np.isfinite(array)):
            raise InvalidDataError("sinogram samples must be finite")
        array.setflags(write=False)
        object.__setattr__(self, "samples", array)

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def angles(self) -> np.ndarray:
        return np.asarray(self.geometry.angles, dtype=np.float64)


@dataclass
class SparseCode:
    """OMP output for one signal"""

    support: List[int]
    coefficients: np.ndarray
    residual_norm: float
    residual_history: List[float] = field(default_factory=list)
    rank_deficient: bool = False

    def dense(self, n_atoms: int) -> np.ndarray:
        out = np.zeros(n_atoms)
        out[self.support] = self.coefficients
        return out
