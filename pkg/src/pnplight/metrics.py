"""Full-reference quality metrics on unit-range images."""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from pnplight.imagecore import as_image

PSNR_CAP = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class MetricReport:
    psnr: float
    ssim: float


def _pair(a, b):
    a = as_image(a, "a")
    b = as_image(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b):
    """PSNR in dB with peak 1.0; identical images return the 99 dB cap."""
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return 10.0 * np.log10(1.0 / mse)


def _gaussian_window_1d():
    r = SSIM_WINDOW // 2
    d = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-(d**2) / (2 * SSIM_SIGMA**2))
    return g / g.sum()


def _filter_valid(plane, g):
    r = len(g) // 2
    out = ndimage.correlate1d(plane, g, axis=0, mode="nearest")
    out = ndimage.correlate1d(out, g, axis=1, mode="nearest")
    return out[r:-r, r:-r]


def ssim_map(a, b):
    """Local SSIM at every position where the 11x11 window fits inside the image.

    Colour images are compared on their channel-mean plane.
    """
    a, b = _pair(a, b)
    if min(a.shape[:2]) < SSIM_WINDOW:
        raise ValueError(f"SSIM needs both dimensions >= {SSIM_WINDOW}, got {a.shape[:2]}")
    x = a.mean(axis=2)
    y = b.mean(axis=2)
    g = _gaussian_window_1d()
    mu_x = _filter_valid(x, g)
    mu_y = _filter_valid(y, g)
    var_x = _filter_valid(x * x, g) - mu_x**2
    var_y = _filter_valid(y * y, g) - mu_y**2
    cov = _filter_valid(x * y, g) - mu_x * mu_y
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    return num / den


def ssim(a, b):
    return float(np.clip(ssim_map(a, b).mean(), -1.0, 1.0))


def evaluate(a, b):
    return MetricReport(psnr(a, b), ssim(a, b))
