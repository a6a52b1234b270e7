"""Plug-and-play low-light enhancement with coordinated denoising."""

from pnplight.imagecore import PatchSpec, as_image, clamp_unit, elementwise_mul, local_max
from pnplight.retinex import DecomposerConfig, RetinexPair, decompose, pseudo_target
from pnplight.degrade import LightReduction, NoiseField, add_noise, degrade, reduce_light
from pnplight.operators import (
    BrightChannelParams,
    ChannelAttention,
    IdentityDenoiser,
    IdentityEnhancer,
    KernelBankDenoiser,
    RetinexGammaEnhancer,
    bright_channel_loss,
    channel_attention_forward,
    channel_pool,
    classical_enhance,
    kernel_bank_denoise,
    pyramid_pool_forward,
)
from pnplight.selfsup import FinetuneConfig, TripletSample, finetune, loss_recon, loss_reg, loss_total
from pnplight.solver import SolverConfig, SolverTrace, mu_schedule, solve, x_update, z_update
from pnplight.metrics import MetricReport, psnr, ssim

__version__ = "0.1.0"
