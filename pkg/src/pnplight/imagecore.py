"""Image container conventions and shared pixel arithmetic.

Images are float64 numpy arrays of shape (H, W, C) with C in {1, 3} and
intensities normalized to [0, 1]. 8-bit files map to v / 255 on load.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class PatchSpec:
    radius: int = 2
    boundary: str = "replicate-edge"

    def __post_init__(self):
        if int(self.radius) != self.radius or self.radius < 0:
            raise ValueError(f"patch radius must be a non-negative integer, got {self.radius}")
        if self.boundary != "replicate-edge":
            raise ValueError(f"unsupported boundary policy {self.boundary!r}")

    @property
    def size(self):
        return 2 * self.radius + 1


def as_image(a, name="image"):
    """Validate ``a`` and return it as a float64 (H, W, C) array.

    2-D input gains a trailing channel axis. Raises ``ValueError`` on a bad
    shape or non-finite values.
    """
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3) or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must have shape (H, W, 1) or (H, W, 3), got {np.shape(a)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def elementwise_mul(a, b):
    """Pixelwise product; a single-channel ``b`` broadcasts over ``a``'s channels."""
    a = as_image(a, "a")
    b = as_image(b, "b")
    if a.shape != b.shape and not (b.shape[:2] == a.shape[:2] and b.shape[2] == 1):
        raise ValueError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return a * b


def clamp_unit(a):
    a = as_image(a)
    return np.clip(a, 0.0, 1.0)


def local_max(a, patch=PatchSpec()):
    """Bright channel: max over channels and a square window, edge-replicated.

    Returns a single-channel (H, W, 1) image.
    """
    a = as_image(a)
    cmax = a.max(axis=2)
    if patch.radius == 0:
        return cmax[:, :, None].copy()
    out = ndimage.maximum_filter(cmax, size=patch.size, mode="nearest")
    return out[:, :, None]


def channel_max(a):
    return as_image(a).max(axis=2)


def gaussian_blur(plane, sigma):
    """Gaussian smoothing of a 2-D plane with edge replication."""
    if sigma == 0:
        return np.array(plane, dtype=np.float64)
    return ndimage.gaussian_filter(np.asarray(plane, dtype=np.float64), sigma, mode="nearest")


def convolve(a, kernel):
    """Convolve every channel of ``a`` with a 2-D kernel, edge-replicated."""
    a = as_image(a)
    kernel = np.asarray(kernel, dtype=np.float64)
    out = np.empty_like(a)
    for c in range(a.shape[2]):
        out[:, :, c] = ndimage.convolve(a[:, :, c], kernel, mode="nearest")
    return out


def resize_bilinear(plane, out_h, out_w):
    """Bilinear resize of a 2-D plane using half-pixel centers.

    Sample positions outside the source grid are clamped to the border, so
    equal sizes give the identity and constants stay constant.
    """
    plane = np.asarray(plane, dtype=np.float64)
    in_h, in_w = plane.shape

    def axis(n_in, n_out):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0, n_in - 1)
        lo = np.floor(src).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, src - lo

    r0, r1, fr = axis(in_h, out_h)
    c0, c1, fc = axis(in_w, out_w)
    top = plane[r0][:, c0] * (1 - fc) + plane[r0][:, c1] * fc
    bot = plane[r1][:, c0] * (1 - fc) + plane[r1][:, c1] * fc
    return top * (1 - fr)[:, None] + bot * fr[:, None]
