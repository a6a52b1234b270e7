"""Self-supervised fine-tuning of the denoiser from Retinex pseudo targets.

Total loss per sample::

    lam * ||D(s_enh) - s_pseudo||^2 + ||D(s_ne) - s_enh||^2

For a kernel bank both terms are quadratic in the weights, so the loss and
its gradient are evaluated through the exact quadratic form.
"""

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from pnplight.degrade import NoiseField, add_noise, derive_seed
from pnplight.imagecore import as_image
from pnplight.retinex import DecomposerConfig, pseudo_target

log = logging.getLogger(__name__)


class FinetuneDivergence(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class TripletSample:
    s_low: np.ndarray
    s_enh: np.ndarray
    s_pseudo: np.ndarray
    s_ne: np.ndarray

    def __post_init__(self):
        shapes = {as_image(getattr(self, f.name), f.name).shape for f in dataclasses.fields(self)}
        if len(shapes) != 1:
            raise ValueError(f"triplet images must share one shape, got {sorted(shapes)}")

    @classmethod
    def build(cls, s_low, s_enh, noise=NoiseField(), decomposer=DecomposerConfig()):
        s_low = as_image(s_low)
        s_enh = as_image(s_enh)
        return cls(s_low, s_enh, pseudo_target(s_low, s_enh, decomposer), add_noise(s_enh, noise))

    def renoised(self, noise):
        return dataclasses.replace(self, s_ne=add_noise(self.s_enh, noise))


@dataclass(frozen=True)
class FinetuneConfig:
    lam: float = 0.3
    epochs: int = 5
    learning_rate: float = 0.05
    steps_per_epoch: int = 200
    unit_gain: bool = True
    noise: NoiseField = field(default_factory=NoiseField)
    seed: int = 0

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError(f"lambda must be non-negative, got {self.lam}")
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ValueError(f"epochs must be a positive integer, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if int(self.steps_per_epoch) != self.steps_per_epoch or self.steps_per_epoch < 1:
            raise ValueError(f"steps_per_epoch must be a positive integer, got {self.steps_per_epoch}")


def _raw(d, img):
    # losses use the unclamped linear output when the denoiser exposes one
    apply = getattr(d, "apply", None)
    return apply(img) if apply is not None else d.denoise(img)


def loss_recon(d, sample):
    r = _raw(d, sample.s_enh) - sample.s_pseudo
    return float(np.sum(r * r))


def loss_reg(d, sample):
    r = _raw(d, sample.s_ne) - sample.s_enh
    return float(np.sum(r * r))


def loss_total(d, sample, lam=0.3):
    if lam < 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    return lam * loss_recon(d, sample) + loss_reg(d, sample)


@dataclass(frozen=True, eq=False)
class Quadratic:
    """loss(w) = w^T A w - 2 b^T w + c."""

    A: np.ndarray
    b: np.ndarray
    c: float

    def __call__(self, w):
        w = np.asarray(w, dtype=np.float64)
        return float(w @ self.A @ w - 2.0 * self.b @ w + self.c)

    def gradient(self, w):
        return 2.0 * (self.A @ w - self.b)

    def minimizer(self):
        return np.linalg.solve(self.A, self.b)

    def __add__(self, other):
        return Quadratic(self.A + other.A, self.b + other.b, self.c + other.c)

    def scaled(self, k):
        return Quadratic(k * self.A, k * self.b, k * self.c)


def _gram(resp, target):
    k = resp.shape[0]
    flat = resp.reshape(k, -1)
    t = target.reshape(-1)
    return Quadratic(flat @ flat.T, flat @ t, float(t @ t))


def recon_quadratic(d, sample):
    return _gram(d.responses(sample.s_enh), sample.s_pseudo)


def reg_quadratic(d, sample):
    return _gram(d.responses(sample.s_ne), sample.s_enh)


def total_quadratic(d, sample, lam=0.3):
    return recon_quadratic(d, sample).scaled(lam) + reg_quadratic(d, sample)


def loss_gradient(d, sample, lam=0.3):
    """Analytic gradient of ``loss_total`` with respect to the kernel-bank weights."""
    return total_quadratic(d, sample, lam).gradient(d.weights)


@dataclass(frozen=True)
class EpochLoss:
    epoch: int
    loss_recon: float
    loss_reg: float
    loss_total: float


# rises below this are round-off, not divergence
_RISE_RTOL = 1e-9
_RISE_ATOL = 1e-12


def _epoch_batch(data, cfg, epoch):
    return [s.renoised(dataclasses.replace(cfg.noise, seed=derive_seed(cfg.seed, epoch, i))) for i, s in enumerate(data)]


def _mean_losses(d, batch, lam, epoch):
    rec = float(np.mean([loss_recon(d, s) for s in batch]))
    reg = float(np.mean([loss_reg(d, s) for s in batch]))
    return EpochLoss(epoch, rec, reg, lam * rec + reg)


def finetune(d, data, cfg=FinetuneConfig()):
    """Full-batch gradient descent on the mean total loss over ``data``.

    Each epoch redraws the twice-corrupted inputs with a seed derived from
    (cfg.seed, epoch, sample index) and takes ``cfg.steps_per_epoch`` steps.
    The step is ``learning_rate`` on the loss normalized per image element, so
    its scale does not depend on image size. With ``cfg.unit_gain`` the
    weights are kept on the plane sum(w) == 1 (projected gradient), so the
    denoiser never shifts overall brightness.

    The logged losses score each epoch's weights on the samples as given
    (their stored ``s_ne``), so the history is comparable across epochs.
    Returns the tuned denoiser and that history; entry 0 is the starting
    point.
    Raises ``FinetuneDivergence`` when the epoch loss rises three epochs in a
    row or becomes non-finite.
    """
    data = list(data)
    if not data:
        raise ValueError("finetune needs at least one sample")
    w = np.array(d.weights, dtype=np.float64)
    if cfg.unit_gain:
        w = w + (1.0 - w.sum()) / w.size
        d = d.with_weights(w)
    history = [_mean_losses(d, data, cfg.lam, 0)]
    rises = 0
    for epoch in range(1, cfg.epochs + 1):
        batch = _epoch_batch(data, cfg, epoch)
        q = None
        for s in batch:
            qs = total_quadratic(d, s, cfg.lam).scaled(1.0 / (len(batch) * s.s_enh.size))
            q = qs if q is None else q + qs
        for _ in range(cfg.steps_per_epoch):
            g = q.gradient(w)
            if cfg.unit_gain:
                g = g - g.mean()
            w = w - cfg.learning_rate * g
        if not np.all(np.isfinite(w)):
            raise FinetuneDivergence(f"weights became non-finite in epoch {epoch}")
        d = d.with_weights(w)
        rec = _mean_losses(d, data, cfg.lam, epoch)
        if not np.isfinite(rec.loss_total):
            raise FinetuneDivergence(f"loss became non-finite in epoch {epoch}")
        prev = history[-1].loss_total
        rises = rises + 1 if rec.loss_total > prev + _RISE_RTOL * prev + _RISE_ATOL else 0
        history.append(rec)
        log.info("epoch %d: recon=%.6g reg=%.6g total=%.6g", epoch, rec.loss_recon, rec.loss_reg, rec.loss_total)
        if rises >= 3:
            raise FinetuneDivergence(
                f"loss increased for 3 consecutive epochs (last {history[-1].loss_total:.6g}); "
                f"lower the learning rate (now {cfg.learning_rate})"
            )
    return d, history
