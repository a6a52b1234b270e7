"""Acceptance criteria, one test each; every test prints a PASS/FAIL line.

Run directly with ``python3 tests/test_acceptance.py`` or via pytest.
"""

import contextlib
import os
import time

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from conftest import ACCEPTANCE_LINES, brute_conv
from pnplight.cli import main
from pnplight.degrade import LightReduction, NoiseField, degrade, derive_seed
from pnplight.imfile import write_image
from pnplight.imagecore import PatchSpec
from pnplight.metrics import PSNR_CAP, psnr, ssim
from pnplight.operators import (
    BrightChannelParams,
    ChannelAttention,
    IdentityDenoiser,
    KernelBankDenoiser,
    PrecomputedEnhancer,
    RetinexGammaEnhancer,
    bright_channel_loss,
    channel_attention_forward,
    make_kernel,
    pyramid_pool_forward,
)
from pnplight.retinex import DecomposerConfig, decompose
from pnplight.selfsup import FinetuneConfig, TripletSample, finetune, loss_gradient, loss_total
from pnplight.solver import SolverConfig, mu_schedule, solve, z_update
from pnplight.synthetic import benchmark
from test_operators import _attention_reference, _pyramid_reference

pytestmark = pytest.mark.acceptance

ZERO = NoiseField(sigma_min=0.0, sigma_max=0.0)


@contextlib.contextmanager
def criterion(name, budget=None):
    """Record PASS/FAIL for one criterion, including its runtime budget in seconds."""
    t0 = time.perf_counter()
    try:
        yield
        elapsed = time.perf_counter() - t0
        if budget is not None:
            assert elapsed < budget, f"runtime {elapsed:.2f}s exceeds {budget}s"
    except BaseException as exc:
        line = f"FAIL  {name}  ({type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''})"
        ACCEPTANCE_LINES.append(line)
        print(line)
        raise
    line = f"PASS  {name}  ({time.perf_counter() - t0:.2f}s)"
    ACCEPTANCE_LINES.append(line)
    print(line)


def test_closed_form_z_update():
    with criterion("closed-form z-update vs numerical minimizer", budget=1.0):
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(100):
            e, x = rng.random(2)
            mu = float(rng.uniform(0.01, 20.0))
            z = z_update(np.full((1, 1, 1), e), np.full((1, 1, 1), x), mu, ZERO, 0)[0, 0, 0]
            res = minimize_scalar(lambda t: 0.5 * (e - t) ** 2 + 0.5 * mu * (t - x) ** 2, method="brent", tol=1e-12)
            worst = max(worst, abs(z - res.x))
        assert worst <= 1e-6, worst


def test_contraction_law():
    with criterion("contraction ratio mu/(1+mu) with identity denoiser", budget=1.0):
        a, b = 0.8, 0.2
        e = np.full((8, 8, 3), a)
        cfg = SolverConfig(renoise=ZERO, capture_intermediates=True)
        _, trace = solve(np.zeros_like(e), PrecomputedEnhancer(e), IdentityDenoiser(), cfg, x0=np.full_like(e, b))
        assert len(trace) == 10
        errs = [abs(b - a)] + [np.abs(r.x - e).max() for r in trace.records]
        for k in range(10):
            mu = mu_schedule(cfg, k)
            assert abs(errs[k + 1] / errs[k] - mu / (1 + mu)) <= 1e-9
        assert all(n < p for p, n in zip(errs, errs[1:]))


def test_mu_schedule_endpoints():
    with criterion("mu-schedule endpoints 0.1 and 10.0"):
        cfg = SolverConfig()
        assert mu_schedule(cfg, 0) == 0.1
        assert mu_schedule(cfg, 9) == 10.0


def test_retinex_roundtrip():
    with criterion("retinex roundtrip on 50 images and constants", budget=5.0):
        cfg = DecomposerConfig()
        worst = 0.0
        for seed in range(50):
            s = np.random.default_rng(seed).random((32, 32, 3))
            pair = decompose(s, cfg)
            feasible = s <= pair.illumination
            worst = max(worst, np.abs(pair.reflectance * pair.illumination - s)[feasible].max(initial=0.0))
        assert worst <= 1e-6, worst
        for v in (0.01, 0.2, 0.5, 0.93, 1.0):
            s = np.full((32, 32, 3), v)
            assert np.abs(decompose(s, cfg).reconstruct() - s).max() <= 1e-9


def _oracle_sample(seed):
    rng = np.random.default_rng(seed)
    s_low = 0.3 * rng.random((10, 10, 3))
    return TripletSample.build(s_low, RetinexGammaEnhancer().enhance(s_low), ZERO)


def test_selfsup_objective():
    with criterion("self-supervised gradient and 2-kernel least squares", budget=10.0):
        sample = _oracle_sample(1)
        sample = TripletSample.build(sample.s_low, sample.s_enh, NoiseField(seed=3))
        w = np.random.default_rng(7).standard_normal(5) * 0.5
        d = KernelBankDenoiser(weights=w)
        grad = loss_gradient(d, sample, 0.3)
        h = 1e-4
        for k in range(5):
            step = np.zeros(5)
            step[k] = h
            fd = (loss_total(d.with_weights(w + step), sample, 0.3) - loss_total(d.with_weights(w - step), sample, 0.3)) / (2 * h)
            assert abs(grad[k] - fd) <= 1e-5 * abs(fd)

        sample = _oracle_sample(2)
        names = ("identity", "box3")
        re = np.stack([brute_conv(sample.s_enh, make_kernel(n)).ravel() for n in names])
        rn = np.stack([brute_conv(sample.s_ne, make_kernel(n)).ravel() for n in names])
        A = 0.3 * re @ re.T + rn @ rn.T
        b = 0.3 * re @ sample.s_pseudo.ravel() + rn @ sample.s_enh.ravel()
        w_star = np.linalg.solve(A, b)
        lr = 1.0 / np.linalg.eigvalsh(2 * A / sample.s_enh.size).max()
        cfg = FinetuneConfig(noise=ZERO, learning_rate=lr, steps_per_epoch=4000, unit_gain=False)
        tuned, _ = finetune(KernelBankDenoiser(names), [sample], cfg)
        assert np.linalg.norm(tuned.weights - w_star) <= 1e-4


def test_loss_constants():
    with criterion("default lambda 0.3 and 5 epochs"):
        cfg = FinetuneConfig()
        assert cfg.lam == 0.3
        assert cfg.epochs == 5


def test_bright_channel_loss():
    with criterion("bright channel loss: ones give 0, brightening monotone", budget=1.0):
        assert bright_channel_loss(np.ones((16, 16, 3))) == 0.0
        params = BrightChannelParams(PatchSpec(2))
        for seed in range(20):
            rng = np.random.default_rng(seed)
            img = 0.7 * rng.random((16, 16, 3))
            losses = [bright_channel_loss(np.clip(c * img, 0, 1), params) for c in (1.0, 1.2, 1.5, 2.0)]
            assert all(n <= p for p, n in zip(losses, losses[1:]))


def test_attention_and_pyramid_forward():
    with criterion("channel attention and pyramid pooling forward passes", budget=1.0):
        rng = np.random.default_rng(11)
        f = rng.standard_normal((3, 8, 8))
        assert np.array_equal(channel_attention_forward(f, ChannelAttention.zeros(3)), 0.5 * f)
        for v in (-1.5, 0.0, 0.37, 2.0):
            np.testing.assert_allclose(pyramid_pool_forward(np.full((3, 9, 7), v), [1, 2, 3, 6]), v, atol=1e-9, rtol=0)
        for seed in range(3):
            g = np.random.default_rng(seed).standard_normal((4, 6, 5))
            ca = ChannelAttention.random(4, reduction=2, seed=seed)
            np.testing.assert_allclose(channel_attention_forward(g, ca), _attention_reference(g, ca), atol=1e-9, rtol=0)
            np.testing.assert_allclose(pyramid_pool_forward(g, [1, 2, 4]), _pyramid_reference(g, [1, 2, 4]), atol=1e-9, rtol=0)


def test_metric_sanity():
    with criterion("metric sanity and PSNR noise ladder", budget=2.0):
        rng = np.random.default_rng(5)
        x = rng.random((32, 32, 3))
        assert psnr(x, x) == PSNR_CAP
        assert psnr(np.zeros((8, 8, 3)), np.ones((8, 8, 3))) == 0.0
        assert ssim(x, x) == 1.0
        n = rng.standard_normal(x.shape)
        ladder = [psnr(x, np.clip(x + s * n, 0, 1)) for s in (0.02, 0.05, 0.1)]
        assert ladder[0] > ladder[1] > ladder[2]


# benchmark degradation: linear attenuation keeps tone recoverable by the classical enhancer
BENCH_LIGHT = LightReduction(alpha=0.2, gamma=1.0)
BENCH_SIGMA = (0.02, 0.12)


def run_benchmark(seed=0, n=20, size=64):
    """Return per-image PSNR of the coordinated output and of the one-shot baseline."""
    clean = benchmark(n, size, seed=seed)
    enhancer = RetinexGammaEnhancer(target_illum=0.8)
    ft_cfg = FinetuneConfig(seed=seed)
    low = [degrade(c, BENCH_LIGHT, NoiseField(*BENCH_SIGMA, seed=derive_seed(seed, "bench", i))) for i, c in enumerate(clean)]
    data = []
    for i, y in enumerate(low):
        nf = NoiseField(ft_cfg.noise.sigma_min, ft_cfg.noise.sigma_max, seed=derive_seed(seed, "s_ne", i))
        data.append(TripletSample.build(y, enhancer.enhance(y), nf))
    denoiser, _ = finetune(KernelBankDenoiser(), data, ft_cfg)
    ours, base = [], []
    for i, (y, c) in enumerate(zip(low, clean)):
        x, trace = solve(y, enhancer, denoiser, SolverConfig(seed=derive_seed(seed, "solve", i)))
        ours.append(psnr(x, c))
        base.append(psnr(trace.initial, c))
    return np.array(ours), np.array(base)


def test_end_to_end_ordering():
    with criterion("end-to-end median PSNR: coordinated >= one-shot baseline", budget=60.0):
        ours, base = run_benchmark()
        print(f"      median PSNR coordinated {np.median(ours):.3f} dB, baseline {np.median(base):.3f} dB")
        assert np.median(ours) >= np.median(base)


def _tree(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for f in files:
            p = os.path.join(dirpath, f)
            with open(p, "rb") as fh:
                out[os.path.relpath(p, root)] = fh.read()
    return out


def test_cli_determinism(tmp_path):
    with criterion("every CLI command is byte-deterministic"):
        clean = tmp_path / "clean"
        for i, img in enumerate(benchmark(3, 24, seed=1)):
            write_image(str(clean / f"s{i}.png"), img)
        runs = {}
        for tag in ("a", "b"):
            out = tmp_path / tag
            assert main(["degrade", "--input", str(clean), "--output", str(out / "low"), "--seed", "5"]) == 0
            assert main(["finetune", "--input", str(out / "low"), "--output", str(out / "w.txt"), "--seed", "5"]) == 0
            assert main(["enhance", "--input", str(out / "low"), "--output", str(out / "enh"), "--seed", "5",
                         "--weights", str(out / "w.txt"), "--baseline", "--reference", str(clean),
                         "--dump-iters", str(out / "iters")]) == 0
            assert main(["eval", "--input", str(out / "enh"), "--reference", str(clean), "--output", str(out / "m.csv")]) == 0
            runs[tag] = _tree(out)
        assert runs["a"].keys() == runs["b"].keys()
        differing = sorted(k for k in runs["a"] if runs["a"][k] != runs["b"][k])
        assert not differing, differing


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
