"""Pluggable enhancement/denoising operators and enhancement-network forward math.

Any object with an ``enhance(img) -> img`` method is an enhancer and any
object with ``denoise(img) -> img`` is a denoiser. Both must preserve shape,
return values in [0, 1] and be deterministic.
"""

import math
import re
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from pnplight.imagecore import PatchSpec, as_image, clamp_unit, convolve, local_max, resize_bilinear
from pnplight.retinex import DecomposerConfig, decompose


class Enhancer(Protocol):
    def enhance(self, img: np.ndarray) -> np.ndarray: ...


class Denoiser(Protocol):
    def denoise(self, img: np.ndarray) -> np.ndarray: ...


class IdentityEnhancer:
    def enhance(self, img):
        return clamp_unit(img)


class IdentityDenoiser:
    def denoise(self, img):
        return clamp_unit(img)


# --------------------------------------------------------------------------
# Classical Retinex-gamma enhancer
# --------------------------------------------------------------------------

GAMMA_RANGE = (0.05, 1.0)


def solve_illumination_gamma(illum, target_illum, tol=1e-14, max_iter=200):
    """Bisection for gamma in [0.05, 1] with mean(illum**gamma) == target_illum.

    ``mean(illum**gamma)`` is non-increasing in gamma because illum <= 1, so
    the result saturates at 1 when the image is already bright enough and at
    0.05 when the target is out of reach.
    """
    lo, hi = GAMMA_RANGE
    illum = np.asarray(illum, dtype=np.float64)
    if illum.mean() >= target_illum:
        return 1.0
    if np.power(illum, lo).mean() <= target_illum:
        return lo
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if np.power(illum, mid).mean() > target_illum:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def classical_enhance(y, cfg=DecomposerConfig(), target_illum=0.5):
    """Brighten ``y`` by gamma-lifting its Retinex illumination to a target mean."""
    if not 0 < target_illum <= 1:
        raise ValueError(f"target_illum must lie in (0, 1], got {target_illum}")
    y = as_image(y)
    pair = decompose(y, cfg)
    gamma = solve_illumination_gamma(pair.illumination, target_illum)
    if gamma == 1.0:
        lifted = pair.illumination
    else:
        lifted = np.power(pair.illumination, gamma)
    return clamp_unit(pair.reflectance * lifted)


@dataclass(frozen=True)
class RetinexGammaEnhancer:
    decomposer: DecomposerConfig = DecomposerConfig()
    target_illum: float = 0.5

    def __post_init__(self):
        if not 0 < self.target_illum <= 1:
            raise ValueError(f"target_illum must lie in (0, 1], got {self.target_illum}")

    def enhance(self, img):
        return classical_enhance(img, self.decomposer, self.target_illum)


class PrecomputedEnhancer:
    """Enhancer backed by an externally produced result for one specific input."""

    def __init__(self, enhanced):
        self.enhanced = clamp_unit(enhanced)

    def enhance(self, img):
        img = as_image(img)
        if img.shape != self.enhanced.shape:
            raise ValueError(f"precomputed enhancement has shape {self.enhanced.shape}, input is {img.shape}")
        return self.enhanced.copy()


# --------------------------------------------------------------------------
# Channel attention and pyramid pooling (feature maps are C x H x W)
# --------------------------------------------------------------------------

def _feature_map(f):
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 3 or min(f.shape) < 1:
        raise ValueError(f"feature map must have shape (C, H, W), got {f.shape}")
    return f


def channel_pool(f_in):
    """Global average pooling: one mean per channel."""
    return _feature_map(f_in).mean(axis=(1, 2))


_OPEN_UNIT = (np.finfo(np.float64).tiny, np.nextafter(1.0, 0.0))


def _sigmoid(v):
    # kept strictly inside (0, 1) so a gate never zeroes or passes a channel unchanged
    with np.errstate(over="ignore"):
        return np.clip(1.0 / (1.0 + np.exp(-v)), *_OPEN_UNIT)


@dataclass(frozen=True, eq=False)
class ChannelAttention:
    """Squeeze/excite parameters of the two 1x1 convolutions over the pooled descriptor.

    ``squeeze_weight`` is (C, C'), ``excite_weight`` is (C', C); the hidden
    width C' is C // reduction.
    """

    squeeze_weight: np.ndarray
    squeeze_bias: np.ndarray
    excite_weight: np.ndarray
    excite_bias: np.ndarray

    def __post_init__(self):
        c, c_hidden = np.shape(self.squeeze_weight)
        if np.shape(self.squeeze_bias) != (c_hidden,):
            raise ValueError("squeeze_bias must have length C'")
        if np.shape(self.excite_weight) != (c_hidden, c):
            raise ValueError("excite_weight must have shape (C', C)")
        if np.shape(self.excite_bias) != (c,):
            raise ValueError("excite_bias must have length C")

    @property
    def channels(self):
        return np.shape(self.squeeze_weight)[0]

    @classmethod
    def zeros(cls, channels, reduction=1):
        hidden = max(1, channels // reduction)
        return cls(np.zeros((channels, hidden)), np.zeros(hidden), np.zeros((hidden, channels)), np.zeros(channels))

    @classmethod
    def random(cls, channels, reduction=1, seed=0, scale=1.0):
        hidden = max(1, channels // reduction)
        rng = np.random.default_rng(seed)
        return cls(
            scale * rng.standard_normal((channels, hidden)),
            scale * rng.standard_normal(hidden),
            scale * rng.standard_normal((hidden, channels)),
            scale * rng.standard_normal(channels),
        )

    def channel_weights(self, descriptor):
        hidden = np.maximum(descriptor @ self.squeeze_weight + self.squeeze_bias, 0.0)
        return _sigmoid(hidden @ self.excite_weight + self.excite_bias)


def channel_attention_forward(f_in, ca):
    f_in = _feature_map(f_in)
    if f_in.shape[0] != ca.channels:
        raise ValueError(f"feature map has {f_in.shape[0]} channels, attention expects {ca.channels}")
    weights = ca.channel_weights(channel_pool(f_in))
    return weights[:, None, None] * f_in


def adaptive_avg_pool(plane, out_h, out_w):
    """Average-pool a 2-D plane onto an out_h x out_w grid of ceil-partitioned cells."""
    h, w = plane.shape
    out = np.empty((out_h, out_w))
    for i in range(out_h):
        r0, r1 = (i * h) // out_h, -((-(i + 1) * h) // out_h)
        for j in range(out_w):
            c0, c1 = (j * w) // out_w, -((-(j + 1) * w) // out_w)
            out[i, j] = plane[r0:r1, c0:c1].mean()
    return out


def pyramid_pool_forward(f_in, scales):
    """Multi-scale context: pool to s x s, upsample back, average with the input."""
    f_in = _feature_map(f_in)
    scales = list(scales)
    if not scales:
        raise ValueError("scales must be non-empty")
    if any(int(s) != s or s < 1 for s in scales):
        raise ValueError(f"scales must be positive integers, got {scales}")
    c, h, w = f_in.shape
    acc = f_in.copy()
    for s in scales:
        for ch in range(c):
            pooled = adaptive_avg_pool(f_in[ch], s, s)
            acc[ch] += resize_bilinear(pooled, h, w)
    return acc / (len(scales) + 1)


# --------------------------------------------------------------------------
# Bright channel loss
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BrightChannelParams:
    patch: PatchSpec = PatchSpec(radius=2)
    reduction: str = "sum"

    def __post_init__(self):
        if self.reduction not in ("sum", "mean"):
            raise ValueError(f"reduction must be 'sum' or 'mean', got {self.reduction!r}")


def bright_channel_loss(i, p=BrightChannelParams()):
    gap = 1.0 - local_max(i, p.patch)
    return float(gap.sum() if p.reduction == "sum" else gap.mean())


# --------------------------------------------------------------------------
# Kernel-bank denoiser
# --------------------------------------------------------------------------

DEFAULT_BANK = ("identity", "box3", "box5", "gauss1", "gauss2")


def make_kernel(name):
    """Build a normalized kernel from its name: identity, box<n>, gauss<sigma>."""
    if name == "identity":
        return np.ones((1, 1))
    m = re.fullmatch(r"box(\d+)", name)
    if m:
        n = int(m.group(1))
        if n < 1 or n % 2 == 0:
            raise ValueError(f"box kernel size must be odd and positive: {name!r}")
        return np.full((n, n), 1.0 / (n * n))
    m = re.fullmatch(r"gauss(\d+(?:\.\d+)?)", name)
    if m:
        sigma = float(m.group(1))
        if sigma <= 0:
            raise ValueError(f"gauss sigma must be positive: {name!r}")
        r = math.ceil(2 * sigma)
        d = np.arange(-r, r + 1)
        g = np.exp(-(d**2) / (2 * sigma**2))
        k = np.outer(g, g)
        return k / k.sum()
    raise ValueError(f"unknown kernel {name!r}")


class WeightFileError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class KernelBankDenoiser:
    """Learned linear combination of fixed normalized smoothing kernels.

    ``apply`` is the raw linear response used for training; ``denoise``
    clamps it to [0, 1].
    """

    names: tuple = DEFAULT_BANK
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        names = tuple(self.names)
        if not names:
            raise ValueError("kernel bank must not be empty")
        if "identity" not in names:
            raise ValueError("kernel bank must include the identity kernel")
        kernels = tuple(make_kernel(n) for n in names)
        if self.weights is None:
            weights = np.zeros(len(names))
            weights[names.index("identity")] = 1.0
        else:
            weights = np.array(self.weights, dtype=np.float64).reshape(-1)
        if weights.shape != (len(names),):
            raise ValueError(f"got {weights.size} weights for {len(names)} kernels")
        if not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite")
        weights.setflags(write=False)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "kernels", kernels)

    def with_weights(self, weights):
        return KernelBankDenoiser(self.names, weights)

    def responses(self, s):
        """Stack of per-kernel responses, shape (K, H, W, C)."""
        s = as_image(s)
        return np.stack([s if k.shape == (1, 1) else convolve(s, k) for k in self.kernels])

    def apply(self, s):
        return np.tensordot(self.weights, self.responses(s), axes=1)

    def denoise(self, s):
        return clamp_unit(self.apply(s))

    def save(self, path):
        lines = [
            "# kernel-bank denoiser weights",
            "kind = kernel_bank",
            "kernels = " + ", ".join(self.names),
            "weights = " + ", ".join(format(w, ".17g") for w in self.weights),
        ]
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        return cls.parse(text, source=str(path))

    @classmethod
    def parse(cls, text, source="<string>"):
        entries = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep or not key:
                raise WeightFileError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
            if key not in ("kind", "kernels", "weights"):
                raise WeightFileError(f"{source}:{lineno}: unknown key {key!r}")
            entries[key] = (lineno, value)
        for key in ("kernels", "weights"):
            if key not in entries:
                raise WeightFileError(f"{source}: missing required key {key!r}")
        if "kind" in entries and entries["kind"][1] != "kernel_bank":
            lineno, value = entries["kind"]
            raise WeightFileError(f"{source}:{lineno}: unsupported kind {value!r}")
        lineno, value = entries["kernels"]
        names = tuple(n.strip() for n in value.split(","))
        try:
            for n in names:
                make_kernel(n)
        except ValueError as exc:
            raise WeightFileError(f"{source}:{lineno}: {exc}") from None
        lineno, value = entries["weights"]
        try:
            weights = [float(v) for v in value.split(",")]
        except ValueError:
            raise WeightFileError(f"{source}:{lineno}: weights must be comma-separated decimals") from None
        try:
            return cls(names, weights)
        except ValueError as exc:
            raise WeightFileError(f"{source}:{lineno}: {exc}") from None


def kernel_bank_denoise(s, d):
    return d.denoise(s)


ENHANCERS = {
    "identity": IdentityEnhancer,
    "retinex-gamma": RetinexGammaEnhancer,
}

DENOISERS = {
    "identity": IdentityDenoiser,
    "kernel-bank": KernelBankDenoiser,
}
