"""Half-quadratic splitting loop alternating enhancement fidelity and denoising.

Each iteration solves the quadratic z-subproblem in closed form::

    z = (E(y) + mu * n(x)) / (1 + mu)

and then hands z to the plugged-in denoiser.
"""

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from pnplight.degrade import SEED_MASK, NoiseField, add_noise
from pnplight.imagecore import as_image, clamp_unit
from pnplight.metrics import psnr, ssim


def default_renoise():
    return NoiseField(sigma_min=0.01, sigma_max=0.01, grid=4, seed=0, signal_dependence=0.0)


class SolverDivergence(RuntimeError):
    def __init__(self, iteration, what):
        super().__init__(f"non-finite {what} at iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class SolverConfig:
    iterations: int = 10
    mu_start: float = 0.1
    mu_end: float = 10.0
    renoise: NoiseField = field(default_factory=default_renoise)
    seed: int = 0
    capture_intermediates: bool = False

    def __post_init__(self):
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise ValueError(f"iterations must be a positive integer, got {self.iterations}")
        if not self.mu_start > 0:
            raise ValueError(f"mu_start must be positive, got {self.mu_start}")
        if not self.mu_end >= self.mu_start:
            raise ValueError(f"mu_end ({self.mu_end}) must be >= mu_start ({self.mu_start})")


@dataclass
class IterationRecord:
    k: int
    mu: float
    z: Optional[np.ndarray] = None
    x: Optional[np.ndarray] = None
    psnr: Optional[float] = None
    ssim: Optional[float] = None


@dataclass
class SolverTrace:
    """Per-iteration records; ``records[k-1]`` holds z_k and x_k for k = 1..K.

    ``enhanced`` is E(y) and ``initial`` is x_0 = D(E(y)), the one-shot
    enhance-then-denoise result.
    """

    records: list = field(default_factory=list)
    enhanced: Optional[np.ndarray] = None
    initial: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.records)


def mu_schedule(cfg, k):
    """Penalty weight for iteration index k in [0, K-1], linear between the endpoints."""
    if int(k) != k or not 0 <= k < cfg.iterations:
        raise ValueError(f"iteration index {k} outside [0, {cfg.iterations - 1}]")
    if cfg.iterations == 1:
        return float(cfg.mu_start)
    if k == cfg.iterations - 1:
        return float(cfg.mu_end)
    return cfg.mu_start + k * (cfg.mu_end - cfg.mu_start) / (cfg.iterations - 1)


def iteration_seed(seed, k):
    return (int(seed) ^ int(k)) & SEED_MASK


def z_update(e_y, x_k, mu, renoise, iter_seed, clamp=True):
    e_y = as_image(e_y, "e_y")
    x_k = as_image(x_k, "x_k")
    if e_y.shape != x_k.shape:
        raise ValueError(f"shape mismatch: {e_y.shape} vs {x_k.shape}")
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    noisy = add_noise(x_k, dataclasses.replace(renoise, seed=iter_seed))
    z = (e_y + mu * noisy) / (1.0 + mu)
    return clamp_unit(z) if clamp else z


def x_update(z, d):
    return d.denoise(z)


def solve(y, e, d, cfg=SolverConfig(), x0=None, reference=None):
    """Run K coordinated iterations and return (x_K, trace).

    ``x0`` overrides the default start D(E(y)). When ``reference`` is given,
    every record carries PSNR/SSIM of x_k against it.
    """
    y = as_image(y, "y")
    e_y = as_image(e.enhance(y), "enhanced image")
    x = x_update(e_y, d) if x0 is None else as_image(x0, "x0")
    trace = SolverTrace(enhanced=e_y, initial=x)
    if reference is not None:
        reference = as_image(reference, "reference")
        use_ssim = min(reference.shape[:2]) >= 11
    for k in range(cfg.iterations):
        mu = mu_schedule(cfg, k)
        z = z_update(e_y, x, mu, cfg.renoise, iteration_seed(cfg.seed, k))
        if not np.all(np.isfinite(z)):
            raise SolverDivergence(k + 1, "z")
        x = x_update(z, d)
        if not np.all(np.isfinite(x)):
            raise SolverDivergence(k + 1, "x")
        rec = IterationRecord(k + 1, mu)
        if cfg.capture_intermediates:
            rec.z, rec.x = z, x
        if reference is not None:
            rec.psnr = psnr(x, reference)
            rec.ssim = ssim(x, reference) if use_ssim else None
        trace.records.append(rec)
    return x, trace
