"""Retinex decomposition S = R * I and the pseudo high-light target.

Illumination is the Gaussian-smoothed channel maximum (floored at
``epsilon``); reflectance is the clamped pixelwise quotient.
"""

from dataclasses import dataclass

import numpy as np

from pnplight.imagecore import as_image, channel_max, clamp_unit, elementwise_mul, gaussian_blur


@dataclass(frozen=True)
class DecomposerConfig:
    smoothing_sigma: float = 3.0
    epsilon: float = 0.01

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not self.smoothing_sigma >= 0:
            raise ValueError(f"smoothing_sigma must be non-negative, got {self.smoothing_sigma}")


@dataclass(frozen=True, eq=False)
class RetinexPair:
    reflectance: np.ndarray
    illumination: np.ndarray

    def reconstruct(self):
        return elementwise_mul(self.reflectance, self.illumination)


def estimate_illumination(s, cfg=DecomposerConfig()):
    s = as_image(s)
    illum = gaussian_blur(channel_max(s), cfg.smoothing_sigma)
    return np.maximum(illum, cfg.epsilon)[:, :, None]


def decompose(s, cfg=DecomposerConfig()):
    """Split ``s`` into (reflectance, illumination).

    Reconstruction is exact (to rounding) wherever ``s <= I``; pixels where the
    blurred illumination undershoots the source have their reflectance clamped
    to 1.
    """
    s = as_image(s)
    illum = estimate_illumination(s, cfg)
    refl = clamp_unit(s / illum)
    return RetinexPair(refl, illum)


def pseudo_target(low_clean, enhanced_noisy, cfg=DecomposerConfig()):
    """Reflectance of the low-light image lit by the enhanced image's illumination."""
    low_clean = as_image(low_clean, "low_clean")
    enhanced_noisy = as_image(enhanced_noisy, "enhanced_noisy")
    if low_clean.shape != enhanced_noisy.shape:
        raise ValueError(f"shape mismatch: {low_clean.shape} vs {enhanced_noisy.shape}")
    refl = decompose(low_clean, cfg).reflectance
    illum = estimate_illumination(enhanced_noisy, cfg)
    return clamp_unit(refl * illum)
