"""Seeded piecewise-smooth test scenes for desk-scale benchmarks.

Every pixel's brightest channel equals ``bright``, so the Retinex
illumination of a scene is flat and a linear exposure drop is exactly
undone by lifting the illumination back to ``bright``.
"""

import numpy as np


def _hue(rng, channels):
    c = rng.uniform(0.05, 1.0, channels)
    return c / c.max()


def scene(seed, size=64, channels=3, bright=0.8):
    """Chroma gradient background with flat rectangles and discs."""
    rng = np.random.default_rng(seed)
    rr, cc = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    h0, h1 = _hue(rng, channels), _hue(rng, channels)
    angle = rng.uniform(0, 2 * np.pi)
    t = ((np.cos(angle) * rr + np.sin(angle) * cc + 1.5) / 3.0)[..., None]
    img = h0 * (1 - t) + h1 * t
    img /= img.max(axis=2, keepdims=True)
    for _ in range(rng.integers(3, 7)):
        color = _hue(rng, channels)
        if rng.random() < 0.5:
            r0, c0 = rng.integers(0, size - 8, 2)
            r1, c1 = r0 + rng.integers(6, size // 2), c0 + rng.integers(6, size // 2)
            img[r0:r1, c0:c1] = color
        else:
            cy, cx = rng.uniform(0, 1, 2)
            rad = rng.uniform(0.08, 0.25)
            img[(rr - cy) ** 2 + (cc - cx) ** 2 < rad**2] = color
    return np.clip(bright * img, 0.0, 1.0)


def benchmark(n=20, size=64, seed=0, bright=0.8):
    return [scene(seed * 1000 + i, size, bright=bright) for i in range(n)]
