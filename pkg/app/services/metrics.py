"""
Image quality scores: SSIM, the SSIM-based quality improvement factor Q and PSNR
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.signal import convolve2d

from ..core.config import get_settings
from ..core.errors import ShapeMismatchError
from ..models import Image
from ..schemas import SsimParams


@dataclass(frozen=True)
class QualityFactor:
    """Q value; ``capped`` is set when the restored image scores a perfect SSIM"""

    value: float
    capped: bool = False


def gaussian_window(size: int, sigma: float) -> np.ndarray:
    """Normalized size x size gaussian weights"""
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    window = np.outer(g, g)
    return window / window.sum()


def _check_pair(a: Image, b: Image) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"images differ in shape: {a.shape} vs {b.shape}")


def _ssim_plane(a: np.ndarray, b: np.ndarray, params: SsimParams) -> float:
    if min(a.shape) < params.window:
        raise ShapeMismatchError(f"image {a.shape} smaller than the {params.window}x{params.window} SSIM window")
    window = gaussian_window(params.window, params.sigma)
    c1 = (params.k1 * params.data_range) ** 2
    c2 = (params.k2 * params.data_range) ** 2

    def filt(z):
        return convolve2d(z, window, mode="valid")

    mu_a = filt(a)
    mu_b = filt(b)
    mu_a2 = mu_a * mu_a
    mu_b2 = mu_b * mu_b
    mu_ab = mu_a * mu_b
    sigma_a2 = filt(a * a) - mu_a2
    sigma_b2 = filt(b * b) - mu_b2
    sigma_ab = filt(a * b) - mu_ab

    ssim_map = ((2.0 * mu_ab + c1) * (2.0 * sigma_ab + c2)) / (
        (mu_a2 + mu_b2 + c1) * (sigma_a2 + sigma_b2 + c2)
    )
    return float(np.mean(ssim_map))


def ssim(a: Image, b: Image, params: Optional[SsimParams] = None) -> float:
    """Mean local SSIM over valid window positions, averaged over channels"""
    _check_pair(a, b)
    params = params or SsimParams()
    scores = [_ssim_plane(a.samples[c], b.samples[c], params) for c in range(a.channels)]
    return float(np.mean(scores))


def q_factor(
    truth: Image,
    degraded: Image,
    restored: Image,
    params: Optional[SsimParams] = None,
    cap: Optional[float] = None,
) -> QualityFactor:
    """Q = (1 - S(degraded, truth)) / (1 - S(restored, truth))"""
    _check_pair(truth, degraded)
    _check_pair(truth, restored)
    return q_from_scores(ssim(degraded, truth, params), ssim(restored, truth, params), cap)


def q_from_scores(s_degraded: float, s_restored: float, cap: Optional[float] = None) -> QualityFactor:
    """Q from two precomputed SSIM scores against the same truth"""
    cap = get_settings().Q_CAP if cap is None else cap
    numerator = 1.0 - s_degraded
    denominator = 1.0 - s_restored
    if denominator <= 0.0:
        if numerator <= 0.0:
            return QualityFactor(1.0)
        return QualityFactor(cap, capped=True)
    return QualityFactor(numerator / denominator)


def psnr(a: Image, b: Image, data_range: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB"""
    _check_pair(a, b)
    mse = float(np.mean((a.samples - b.samples) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(data_range ** 2 / mse))
