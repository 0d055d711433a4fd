"""
Synthetic test objects: ellipse phantoms, textures, Sobel gradient fields and image noise
"""
import math
from typing import List, Tuple

import numpy as np
from scipy import ndimage

from ..core.errors import ConfigurationError, ShapeMismatchError
from ..models import Image
from ..schemas import EllipseSpec, PhantomSpec

# (intensity, a, b, x0, y0, rotation in degrees), modified Shepp-Logan contrast
_SHEPP_LOGAN: List[Tuple[float, float, float, float, float, float]] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
]

_RANGE_TOL = 1e-9


def shepp_logan_spec(size: int = 256) -> PhantomSpec:
    return PhantomSpec(
        size=size,
        ellipses=[
            EllipseSpec(center=(x0, y0), axes=(a, b), rotation=phi, intensity=value)
            for value, a, b, x0, y0, phi in _SHEPP_LOGAN
        ],
    )


def disk_spec(size: int = 128, radius: float = 0.5, intensity: float = 1.0) -> PhantomSpec:
    """Single centered disk, ``radius`` in normalized units"""
    return PhantomSpec(size=size, ellipses=[EllipseSpec(axes=(radius, radius), intensity=intensity)])


def random_phantom_spec(size: int = 256, n_ellipses: int = 10, seed: int = 0) -> PhantomSpec:
    """A body ellipse holding ``n_ellipses`` seeded random inclusions"""
    rng = np.random.default_rng(seed)
    ellipses = [EllipseSpec(axes=(0.85, 0.75), intensity=0.2)]
    for _ in range(n_ellipses):
        ellipses.append(
            EllipseSpec(
                center=tuple(rng.uniform(-0.5, 0.5, 2)),
                axes=tuple(rng.uniform(0.04, 0.3, 2)),
                rotation=float(rng.uniform(0.0, 180.0)),
                intensity=float(rng.uniform(-0.15, 0.5)),
            )
        )
    return PhantomSpec(size=size, ellipses=ellipses, seed=seed)


def _normalized_coordinates(size: int) -> Tuple[np.ndarray, np.ndarray]:
    """Pixel centers on [-1, 1]; x grows with the column, y with decreasing row"""
    axis = (2.0 * np.arange(size) + 1.0) / size - 1.0
    xx, yy = np.meshgrid(axis, -axis, indexing="xy")
    return xx, yy


def gen_phantom(spec: PhantomSpec) -> Image:
    """Sum of ellipse indicators; rescaled to [0, 1] only if the sum leaves that range"""
    xx, yy = _normalized_coordinates(spec.size)
    plane = np.zeros((spec.size, spec.size))
    for e in spec.ellipses:
        phi = math.radians(e.rotation)
        dx = xx - e.center[0]
        dy = yy - e.center[1]
        xr = dx * math.cos(phi) + dy * math.sin(phi)
        yr = -dx * math.sin(phi) + dy * math.cos(phi)
        inside = (xr / e.axes[0]) ** 2 + (yr / e.axes[1]) ** 2 <= 1.0
        plane[inside] += e.intensity

    lo, hi = plane.min(), plane.max()
    # round-off in overlapping sums is not a range violation
    if (lo < -_RANGE_TOL or hi > 1.0 + _RANGE_TOL) and hi > lo:
        plane = (plane - lo) / (hi - lo)
    return Image(np.clip(plane, 0.0, 1.0))


def normalize(img: Image) -> Image:
    """Min-max rescale to [0, 1] (constant images map to zeros)"""
    lo, hi = float(img.samples.min()), float(img.samples.max())
    if hi == lo:
        return Image(np.zeros(img.shape))
    return Image((img.samples - lo) / (hi - lo))


def texture_image(size: int = 256, seed: int = 0) -> Image:
    """Piecewise-smooth test image: ellipses, a smooth random field and a striped inclusion"""
    rng = np.random.default_rng(seed)
    pieces = gen_phantom(random_phantom_spec(size, 8, seed)).channel(0)
    field = ndimage.gaussian_filter(rng.standard_normal((size, size)), sigma=size / 16.0, mode="wrap")
    field = field / max(np.abs(field).max(), 1e-12)

    xx, yy = _normalized_coordinates(size)
    cx, cy = rng.uniform(-0.4, 0.4, 2)
    mask = (xx - cx) ** 2 + (yy - cy) ** 2 <= 0.3 ** 2
    angle = rng.uniform(0.0, math.pi)
    stripes = 0.5 + 0.5 * np.sin(2.0 * math.pi * 6.0 * (xx * math.cos(angle) + yy * math.sin(angle)))

    plane = 0.6 * pieces + 0.25 * (0.5 + 0.5 * field) + 0.15 * stripes * mask
    return normalize(Image(plane))


def sobel_gradients(img: Image) -> Image:
    """Two-channel (X, Y) Sobel response with replicated borders"""
    if img.channels != 1:
        raise ShapeMismatchError("Sobel gradients expect a scalar image")
    plane = img.channel(0)
    gx = ndimage.sobel(plane, axis=1, mode="nearest")
    gy = ndimage.sobel(plane, axis=0, mode="nearest")
    return Image(np.stack([gx, gy]))


def add_image_noise(img: Image, sigma: float, seed: int = 0) -> Image:
    """I.i.d. gaussian noise of absolute standard deviation ``sigma``"""
    if sigma < 0:
        raise ConfigurationError("noise sigma must be non-negative")
    if sigma == 0:
        return Image(img.samples.copy())
    rng = np.random.default_rng(seed)
    return Image(img.samples + rng.normal(0.0, sigma, img.shape))
