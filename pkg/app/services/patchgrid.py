"""
Patch geometry: overlapping patch placement, core indicators and the maps
between coefficient space and image space
"""
from typing import Tuple

import numpy as np
from sklearn.feature_extraction.image import extract_patches_2d

from ..core.errors import GridError, PatchIndexError, ShapeMismatchError, TrainingDataError
from ..models import CoefficientTensor, Dictionary, Image, PatchGrid


def _axis_origins(dim: int, m: int, step: int) -> np.ndarray:
    """Multiples of step, plus a flush patch at dim - m if pixels are left over"""
    origins = list(range(0, dim - m + 1, step))
    if origins[-1] + m < dim:
        origins.append(dim - m)
    return np.asarray(origins, dtype=np.int64)


def _axis_cores(dim: int, m: int, origins: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Per-coordinate core patch (nearest covering center, lowest index wins) and cover count"""
    coords = np.arange(dim)[:, np.newaxis]
    covers = (coords >= origins) & (coords < origins + m)
    distance = np.abs(coords - (origins + m // 2)).astype(np.float64)
    distance[~covers] = np.inf
    # argmin returns the first minimum, i.e. the lowest index among ties
    return np.argmin(distance, axis=1), covers.sum(axis=1)


def build_grid(width: int, height: int, m: int, step: int) -> PatchGrid:
    """Place m x m patches every ``step`` pixels and compute core/overlap maps.

    The L1 distance to the centers C_p = r_p + m // 2 separates into a row
    and a column term on a product lattice, so the nearest center is found
    per axis. Candidates are restricted to patches covering the pixel.
    """
    if m < 1 or step < 1:
        raise GridError(f"patch size and step must be positive (m={m}, step={step})")
    if m > min(width, height):
        raise GridError(f"patch size {m} exceeds image side ({width}x{height})")
    if step > m:
        raise GridError(f"step {step} larger than patch size {m} leaves gaps")

    row_origins = _axis_origins(height, m, step)
    col_origins = _axis_origins(width, m, step)
    row_core, row_count = _axis_cores(height, m, row_origins)
    col_core, col_count = _axis_cores(width, m, col_origins)

    n_cols = len(col_origins)
    rr, cc = np.meshgrid(row_origins, col_origins, indexing="ij")
    origins = np.stack([rr.ravel(), cc.ravel()], axis=1)
    core_map = row_core[:, np.newaxis] * n_cols + col_core[np.newaxis, :]
    overlap_count = row_count[:, np.newaxis] * col_count[np.newaxis, :]

    return PatchGrid(
        image_width=width,
        image_height=height,
        patch_size=m,
        step=step,
        origins=origins,
        core_map=core_map,
        overlap_count=overlap_count,
    )


def _check_patch(grid: PatchGrid, p: int) -> None:
    if not 0 <= p < grid.n_patches:
        raise PatchIndexError(f"patch index {p} out of range [0, {grid.n_patches})")


def _check_image(img: Image, grid: PatchGrid) -> None:
    if (img.width, img.height) != (grid.image_width, grid.image_height):
        raise ShapeMismatchError(
            f"image {img.width}x{img.height} does not match grid "
            f"{grid.image_width}x{grid.image_height}"
        )


def extract_patch(img: Image, grid: PatchGrid, p: int) -> np.ndarray:
    """Window of ``img`` at origin r_p as a (C, m, m) block"""
    _check_patch(grid, p)
    _check_image(img, grid)
    r, c = grid.origins[p]
    m = grid.patch_size
    return img.samples[:, r:r + m, c:c + m].copy()


def write_patch(img: Image, grid: PatchGrid, p: int, block: np.ndarray) -> Image:
    """Copy of ``img`` with the window at r_p replaced by ``block``"""
    _check_patch(grid, p)
    _check_image(img, grid)
    m = grid.patch_size
    block = np.asarray(block, dtype=np.float64)
    if block.shape != (img.channels, m, m):
        raise ShapeMismatchError(f"block shape {block.shape} != {(img.channels, m, m)}")
    r, c = grid.origins[p]
    samples = img.samples.copy()
    samples[:, r:r + m, c:c + m] = block
    return Image(samples)


def _check_coefficients(w: CoefficientTensor, dictionary: Dictionary, n_patches: int) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (n_patches, dictionary.n_atoms):
        raise ShapeMismatchError(
            f"coefficients {w.shape} do not match ({n_patches} patches, {dictionary.n_atoms} atoms)"
        )
    return w


def render_patch(w: CoefficientTensor, dictionary: Dictionary, p: int) -> np.ndarray:
    """Dense combination sum_k w_kp phi_k over the patch support"""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[1] != dictionary.n_atoms:
        raise ShapeMismatchError(f"coefficients {w.shape} do not match {dictionary.n_atoms} atoms")
    if not 0 <= p < w.shape[0]:
        raise PatchIndexError(f"patch index {p} out of range [0, {w.shape[0]})")
    return np.tensordot(w[p], dictionary.atoms, axes=1)


def compose_core(w: CoefficientTensor, dictionary: Dictionary, grid: PatchGrid) -> Image:
    """Image taking every pixel from its core patch only"""
    return Image(PatchComposer(grid, dictionary).compose_coefficients(w))


def sample_patches(img: Image, m: int, n: int, seed: int = 0) -> np.ndarray:
    """Random m x m windows of ``img`` as rows of an (n, C*m*m) matrix, channel-planar"""
    if m < 1:
        raise GridError(f"patch size must be positive, got {m}")
    if n < 1:
        raise TrainingDataError(f"need at least one training patch, got n={n}")
    if m > min(img.width, img.height):
        raise GridError(f"patch size {m} exceeds image side ({img.width}x{img.height})")
    channels_last = np.moveaxis(img.samples, 0, -1)
    if img.channels == 1:
        channels_last = channels_last[..., 0]
    total = (img.height - m + 1) * (img.width - m + 1)
    max_patches = n if n < total else None
    windows = extract_patches_2d(channels_last, (m, m), max_patches=max_patches, random_state=seed)
    if img.channels == 1:
        windows = windows[:, np.newaxis]
    else:
        windows = np.moveaxis(windows, -1, 1)
    return windows.reshape(windows.shape[0], -1)


class PatchComposer:
    """Precomputed gather/scatter maps for one (grid, dictionary) pair.

    Patch renderings are handled as a (P, L) matrix with L = C*m*m.
    ``compose`` gathers each pixel from its core patch, ``extract`` gathers
    every patch window from an image; both come with exact adjoints.
    """

    def __init__(self, grid: PatchGrid, dictionary: Dictionary):
        if dictionary.patch_size != grid.patch_size:
            raise ShapeMismatchError(
                f"dictionary patch size {dictionary.patch_size} != grid patch size {grid.patch_size}"
            )
        self.grid = grid
        self.dictionary = dictionary
        self.atoms_flat = dictionary.flat

        C = dictionary.channels
        H, W, m = grid.image_height, grid.image_width, grid.patch_size
        self.image_shape = (C, H, W)
        self.signal_length = C * m * m

        offsets = np.arange(m)
        chan = np.arange(C)[:, None, None] * (H * W)
        rows = grid.origins[:, 0][:, None, None, None] + offsets[None, None, :, None]
        cols = grid.origins[:, 1][:, None, None, None] + offsets[None, None, None, :]
        # (P, L) flat image index of every patch element
        self.extract_index = (chan[None] + rows * W + cols).reshape(grid.n_patches, -1)

        ii, jj = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
        core = grid.core_map
        local = (ii - grid.origins[core, 0]) * m + (jj - grid.origins[core, 1])
        # (C*H*W,) flat patch-matrix index feeding every pixel
        self.core_index = (
            core[None] * self.signal_length + np.arange(C)[:, None, None] * (m * m) + local[None]
        ).ravel()

    @property
    def n_patches(self) -> int:
        return self.grid.n_patches

    def render(self, w: CoefficientTensor) -> np.ndarray:
        """All patch renderings, (P, L)"""
        w = _check_coefficients(w, self.dictionary, self.n_patches)
        return w @ self.atoms_flat

    def render_adjoint(self, patches: np.ndarray) -> np.ndarray:
        return patches @ self.atoms_flat.T

    def compose(self, patches: np.ndarray) -> np.ndarray:
        return patches.ravel()[self.core_index].reshape(self.image_shape)

    def compose_adjoint(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros(self.n_patches * self.signal_length)
        out[self.core_index] = x.ravel()
        return out.reshape(self.n_patches, self.signal_length)

    def extract(self, x: np.ndarray) -> np.ndarray:
        return x.ravel()[self.extract_index]

    def extract_adjoint(self, patches: np.ndarray) -> np.ndarray:
        flat = np.bincount(
            self.extract_index.ravel(),
            weights=patches.ravel(),
            minlength=int(np.prod(self.image_shape)),
        )
        return flat.reshape(self.image_shape)

    def compose_coefficients(self, w: CoefficientTensor) -> np.ndarray:
        return self.compose(self.render(w))
