"""Command-line entry point: ``pnplight {degrade,enhance,finetune,eval}``.

Exit statuses: 0 success, 1 usage/configuration error, 2 I/O error,
3 numerical abort.
"""

import argparse
import csv
import logging
import os
import sys

import numpy as np

from pnplight.config import ConfigError, RunConfig
from pnplight.degrade import add_noise, derive_seed, reduce_light
from pnplight.imfile import is_image_file, list_images, read_image, write_image
from pnplight.metrics import psnr, ssim, SSIM_WINDOW
from pnplight.operators import KernelBankDenoiser, PrecomputedEnhancer
from pnplight.selfsup import FinetuneDivergence, TripletSample, finetune
from pnplight.solver import SolverDivergence, solve

log = logging.getLogger("pnplight")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(v):
    return "" if v is None else format(v, ".6g")


def _write_csv(path, header, rows):
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _sidecar_path(path, suffix):
    root, _ = os.path.splitext(path)
    return f"{root}.{suffix}.txt"


def _resolve_io(inp, out):
    """Expand --input/--output into [(name, input_path, output_path)] sorted by name."""
    if inp is None or out is None:
        raise UsageError("--input and --output are required")
    if os.path.isdir(inp):
        names = list_images(inp)
        return [(n, os.path.join(inp, n), os.path.join(out, n)) for n in names], True
    if not os.path.exists(inp):
        raise OSError(f"{inp}: no such file or directory")
    name = os.path.basename(inp)
    if os.path.isdir(out):
        out = os.path.join(out, name)
    elif not is_image_file(out):
        raise UsageError(f"--output {out!r} must be an image path (.png/.ppm/.pgm) or an existing directory")
    return [(name, inp, out)], False


def _paired_path(base, name, is_dir):
    if base is None:
        return None
    return os.path.join(base, name) if is_dir else base


def _dataset_root(path):
    """A directory with ``low/`` and ``high/`` subdirectories is a paired dataset."""
    low, high = os.path.join(path, "low"), os.path.join(path, "high")
    if os.path.isdir(path) and os.path.isdir(low) and os.path.isdir(high):
        return low, high
    return None


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_degrade(cfg, args):
    jobs, is_dir = _resolve_io(args.input, args.output)
    if not jobs:
        raise OSError(f"{args.input}: no images found")
    light = cfg.light()
    for name, src, dst in jobs:
        seed = derive_seed(cfg["seed"], name)
        nf = cfg.noise("noise", seed)
        x = read_image(src)
        y = reduce_light(add_noise(x, nf), light)
        write_image(dst, y)
        with open(_sidecar_path(dst, "params"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"# input = {name}\n# derived_seed = {seed}\n")
            fh.write(cfg.dump())
        log.info("degraded %s -> %s (seed %d)", src, dst, seed)
    return EXIT_OK


def _load_denoiser(path):
    return KernelBankDenoiser() if path is None else KernelBankDenoiser.load(path)


def _write_trace(path, trace):
    rows = [[r.k, _fmt(r.mu), _fmt(r.psnr), _fmt(r.ssim)] for r in trace.records]
    _write_csv(path, ["k", "mu", "psnr", "ssim"], rows)


def cmd_enhance(cfg, args):
    inp, reference = args.input, args.reference
    paired = _dataset_root(inp) if inp else None
    if paired:
        inp, reference = paired[0], reference or paired[1]
    jobs, is_dir = _resolve_io(inp, args.output)
    if not jobs:
        raise OSError(f"{inp}: no images found")
    denoiser = _load_denoiser(args.weights)
    base_enhancer = cfg.enhancer()
    capture = args.dump_iters is not None
    for name, src, dst in jobs:
        y = read_image(src)
        enh_path = _paired_path(args.enhanced, name, is_dir)
        enhancer = PrecomputedEnhancer(read_image(enh_path)) if enh_path else base_enhancer
        ref_path = _paired_path(reference, name, is_dir)
        ref = None
        if ref_path is not None:
            if os.path.exists(ref_path):
                ref = read_image(ref_path)
                if ref.shape != y.shape:
                    log.warning("%s: reference shape %s differs from input %s; ignored", name, ref.shape, y.shape)
                    ref = None
            else:
                log.warning("%s: no reference %s", name, ref_path)
        solver_cfg = cfg.solver(derive_seed(cfg["seed"], name), capture)
        x, trace = solve(y, enhancer, denoiser, solver_cfg, reference=ref)
        write_image(dst, x)
        if args.baseline:
            if is_dir:
                bpath = os.path.join(args.output, "baseline", name)
            else:
                root, ext = os.path.splitext(dst)
                bpath = f"{root}_baseline{ext}"
            write_image(bpath, trace.initial)
        if capture:
            ddir = os.path.join(args.dump_iters, os.path.splitext(name)[0]) if is_dir else args.dump_iters
            os.makedirs(ddir, exist_ok=True)
            width = max(2, len(str(len(trace))))
            for r in trace.records:
                write_image(os.path.join(ddir, f"z_{r.k:0{width}d}.png"), r.z)
                write_image(os.path.join(ddir, f"x_{r.k:0{width}d}.png"), r.x)
            _write_trace(os.path.join(ddir, "trace.csv"), trace)
        log.info("enhanced %s -> %s", src, dst)
    _write_config(cfg, args.output, is_dir)
    return EXIT_OK


def _write_config(cfg, output, is_dir):
    path = os.path.join(output, "run_config.txt") if is_dir else _sidecar_path(output, "config")
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    cfg.write(path)


def cmd_finetune(cfg, args):
    if args.input is None or args.output is None:
        raise UsageError("--input and --output are required")
    if not os.path.isdir(args.input):
        raise OSError(f"{args.input}: not a directory")
    names = list_images(args.input)
    if not names:
        raise OSError(f"{args.input}: no images found")
    enhancer = cfg.enhancer()
    ft_cfg = cfg.finetune()
    decomposer = cfg.decomposer()
    data = []
    for name in names:
        y = read_image(os.path.join(args.input, name))
        nf = cfg.noise("finetune.noise", derive_seed(cfg["seed"], "s_ne", name))
        data.append(TripletSample.build(y, enhancer.enhance(y), nf, decomposer))
    d, history = finetune(_load_denoiser(args.weights), data, ft_cfg)
    parent = os.path.dirname(args.output)
    if parent:
        os.makedirs(parent, exist_ok=True)
    d.save(args.output)
    rows = [[h.epoch, _fmt(h.loss_recon), _fmt(h.loss_reg), _fmt(h.loss_total)] for h in history]
    _write_csv(os.path.splitext(args.output)[0] + ".losses.csv", ["epoch", "loss_recon", "loss_reg", "loss_total"], rows)
    cfg.write(_sidecar_path(args.output, "config"))
    log.info("wrote %s (weights %s)", args.output, ", ".join(format(w, ".4g") for w in d.weights))
    return EXIT_OK


def cmd_eval(cfg, args):
    if args.input is None or args.output is None:
        raise UsageError("--input and --output are required")
    inp, ref = args.input, args.reference
    if ref is None:
        paired = _dataset_root(inp)
        if not paired:
            raise UsageError("eval needs --reference DIR, or --input ROOT containing low/ and high/")
        inp, ref = paired
    for d in (inp, ref):
        if not os.path.isdir(d):
            raise OSError(f"{d}: not a directory")
    rows, scores = [], []
    ref_names = set(list_images(ref))
    for name in list_images(inp):
        if name not in ref_names:
            log.warning("%s: no counterpart in %s; skipped", name, ref)
            continue
        try:
            a = read_image(os.path.join(inp, name))
            b = read_image(os.path.join(ref, name))
            if a.shape != b.shape:
                raise ValueError(f"shape mismatch {a.shape[:2]} vs {b.shape[:2]}" if a.shape[:2] != b.shape[:2]
                                 else f"channel mismatch {a.shape[2]} vs {b.shape[2]}")
            p = psnr(a, b)
            s = ssim(a, b) if min(a.shape[:2]) >= SSIM_WINDOW else None
        except (OSError, ValueError) as exc:
            log.error("%s: %s", name, exc)
            rows.append([name, "", "", str(exc)])
            continue
        scores.append((p, s))
        rows.append([name, _fmt(p), _fmt(s), ""])
    if scores:
        ssims = [s for _, s in scores if s is not None]
        rows.append(["mean", _fmt(float(np.mean([p for p, _ in scores]))),
                     _fmt(float(np.mean(ssims)) if ssims else None), ""])
    _write_csv(args.output, ["filename", "psnr", "ssim", "error"], rows)
    cfg.write(_sidecar_path(args.output, "config"))
    if not scores:
        log.error("no pair could be evaluated")
        return EXIT_IO
    return EXIT_OK


COMMANDS = {"degrade": cmd_degrade, "enhance": cmd_enhance, "finetune": cmd_finetune, "eval": cmd_eval}


# --------------------------------------------------------------------------
# argument handling
# --------------------------------------------------------------------------

def build_parser():
    parser = _Parser(prog="pnplight", description="Low-light enhancement with coordinated plug-and-play denoising.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--input", help="input image or directory")
        p.add_argument("--output", help="output image, directory or file")
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--seed", type=int)
        p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    def noise(p):
        p.add_argument("--sigma-min", type=float)
        p.add_argument("--sigma-max", type=float)

    p = sub.add_parser("degrade", help="synthesize low-light noisy images")
    common(p)
    noise(p)
    p.add_argument("--alpha", type=float)
    p.add_argument("--gamma", type=float)

    p = sub.add_parser("enhance", help="run the coordinated enhancement/denoising loop")
    common(p)
    noise(p)
    p.add_argument("--iterations", type=int)
    p.add_argument("--mu-start", type=float)
    p.add_argument("--mu-end", type=float)
    p.add_argument("--weights", help="kernel-bank weight file (default: identity denoiser)")
    p.add_argument("--enhanced", help="precomputed enhancer output (file or directory) used instead of the built-in enhancer")
    p.add_argument("--reference", help="ground-truth image/directory for per-iteration PSNR/SSIM")
    p.add_argument("--dump-iters", metavar="DIR", help="write z_k/x_k images and trace.csv")
    p.add_argument("--baseline", action="store_true", help="also write the one-shot enhance-then-denoise result")

    p = sub.add_parser("finetune", help="self-supervised fine-tuning of the kernel-bank denoiser")
    common(p)
    noise(p)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--weights", help="starting weight file")

    p = sub.add_parser("eval", help="PSNR/SSIM over paired directories")
    common(p)
    p.add_argument("--reference", help="directory of reference images")
    return parser


# flag -> config key, per command; noise flags target the command's own noise model
_FLAG_KEYS = {
    "seed": "seed",
    "alpha": "light.alpha",
    "gamma": "light.gamma",
    "iterations": "solver.iterations",
    "mu_start": "solver.mu_start",
    "mu_end": "solver.mu_end",
    "lam": "finetune.lambda",
    "epochs": "finetune.epochs",
    "learning_rate": "finetune.learning_rate",
}
_NOISE_PREFIX = {"degrade": "noise", "enhance": "solver.renoise", "finetune": "finetune.noise"}


def resolve_config(args):
    cfg = RunConfig()
    if args.config:
        try:
            cfg.load(args.config)
        except OSError as exc:
            raise OSError(f"{args.config}: cannot read config ({exc.strerror or exc})") from None
    for attr, key in _FLAG_KEYS.items():
        value = getattr(args, attr, None)
        if value is not None:
            cfg.set(key, value)
    prefix = _NOISE_PREFIX.get(args.command)
    if prefix:
        smin, smax = getattr(args, "sigma_min", None), getattr(args, "sigma_max", None)
        if smin is not None:
            cfg.set(f"{prefix}.sigma_min", smin)
        if smax is not None:
            cfg.set(f"{prefix}.sigma_max", smax)
            if smin is None and cfg[f"{prefix}.sigma_min"] > smax:
                cfg.set(f"{prefix}.sigma_min", smax)
    cfg.validate()
    return cfg


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, UsageError) as exc:
        print(f"pnplight: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"pnplight: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SolverDivergence, FinetuneDivergence) as exc:
        print(f"pnplight: numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
