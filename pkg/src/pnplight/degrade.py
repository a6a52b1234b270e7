"""Low-light degradation y = L(n(x)): spatially variant noise, then darkening."""

import hashlib
from dataclasses import dataclass

import numpy as np

from pnplight.imagecore import as_image, clamp_unit, resize_bilinear

SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class LightReduction:
    """Exposure curve ``alpha * x**gamma``."""

    alpha: float = 0.4
    gamma: float = 2.2

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not self.gamma >= 1:
            raise ValueError(f"gamma must be >= 1, got {self.gamma}")


@dataclass(frozen=True)
class NoiseField:
    """Smooth random per-pixel noise level, optionally stronger in dark areas."""

    sigma_min: float = 0.01
    sigma_max: float = 0.06
    grid: int = 4
    seed: int = 0
    signal_dependence: float = 0.5

    def __post_init__(self):
        if not self.sigma_min >= 0:
            raise ValueError(f"sigma_min must be >= 0, got {self.sigma_min}")
        if not self.sigma_max >= self.sigma_min:
            raise ValueError(f"sigma_max ({self.sigma_max}) must be >= sigma_min ({self.sigma_min})")
        if int(self.grid) != self.grid or self.grid < 1:
            raise ValueError(f"grid must be a positive integer, got {self.grid}")
        if not 0 <= self.signal_dependence <= 1:
            raise ValueError(f"signal_dependence must lie in [0, 1], got {self.signal_dependence}")


def derive_seed(seed, *parts):
    """Deterministically mix ``seed`` with integers or strings into a new 64-bit seed."""
    words = [int(seed) & SEED_MASK]
    for p in parts:
        if isinstance(p, str):
            words.append(int.from_bytes(hashlib.sha256(p.encode("utf-8")).digest()[:8], "little"))
        else:
            words.append(int(p) & SEED_MASK)
    return int(np.random.SeedSequence(words).generate_state(1, np.uint64)[0])


def _rng(seed):
    return np.random.default_rng(int(seed) & SEED_MASK)


def _sigma_map(x, nf, rng):
    h, w = x.shape[:2]
    coarse = rng.random((nf.grid, nf.grid))
    m = resize_bilinear(coarse, h, w)
    level = nf.sigma_min + (nf.sigma_max - nf.sigma_min) * m
    return level * (1.0 - nf.signal_dependence * x.mean(axis=2))


def sigma_map(x, nf):
    """Per-pixel noise standard deviation that ``add_noise`` uses for ``x``."""
    x = as_image(x)
    return _sigma_map(x, nf, _rng(nf.seed))


def noise_residual(x, nf):
    """The unclamped additive term sigma(p) * g(p) of ``add_noise``."""
    x = as_image(x)
    rng = _rng(nf.seed)
    sig = _sigma_map(x, nf, rng)
    g = rng.standard_normal(x.shape)
    return sig[:, :, None] * g


def add_noise(x, nf):
    x = as_image(x)
    if nf.sigma_max == 0:
        return clamp_unit(x)
    return clamp_unit(x + noise_residual(x, nf))


def reduce_light(x, lr):
    x = as_image(x)
    return clamp_unit(lr.alpha * np.power(np.clip(x, 0.0, None), lr.gamma))


def degrade(x, lr=LightReduction(), nf=NoiseField()):
    return reduce_light(add_noise(x, nf), lr)
