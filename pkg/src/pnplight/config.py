"""Flat ``key = value`` run configuration with dotted section prefixes.

Every key has a default, a file may override any subset, and command-line
flags override the file. ``dump`` writes the fully resolved configuration in
the same format so a run can be replayed with ``--config``.
"""

import dataclasses

from pnplight.degrade import LightReduction, NoiseField
from pnplight.imagecore import PatchSpec
from pnplight.operators import BrightChannelParams, RetinexGammaEnhancer
from pnplight.retinex import DecomposerConfig
from pnplight.selfsup import FinetuneConfig
from pnplight.solver import SolverConfig


class ConfigError(ValueError):
    pass


def _bool(text):
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _noise_keys(prefix, nf):
    return {
        f"{prefix}.sigma_min": (float, nf.sigma_min),
        f"{prefix}.sigma_max": (float, nf.sigma_max),
        f"{prefix}.grid": (int, nf.grid),
        f"{prefix}.signal_dependence": (float, nf.signal_dependence),
    }


def _defaults():
    dec = DecomposerConfig()
    enh = RetinexGammaEnhancer()
    lr = LightReduction()
    sol = SolverConfig()
    ft = FinetuneConfig()
    bc = BrightChannelParams()
    keys = {
        "seed": (int, 0),
        "decomposer.smoothing_sigma": (float, dec.smoothing_sigma),
        "decomposer.epsilon": (float, dec.epsilon),
        "enhancer.kind": (str, "retinex-gamma"),
        "enhancer.target_illum": (float, enh.target_illum),
        "light.alpha": (float, lr.alpha),
        "light.gamma": (float, lr.gamma),
        "solver.iterations": (int, sol.iterations),
        "solver.mu_start": (float, sol.mu_start),
        "solver.mu_end": (float, sol.mu_end),
        "finetune.lambda": (float, ft.lam),
        "finetune.epochs": (int, ft.epochs),
        "finetune.learning_rate": (float, ft.learning_rate),
        "finetune.steps_per_epoch": (int, ft.steps_per_epoch),
        "finetune.unit_gain": (_bool, ft.unit_gain),
        "bright.radius": (int, bc.patch.radius),
        "bright.reduction": (str, bc.reduction),
    }
    keys.update(_noise_keys("noise", NoiseField()))
    keys.update(_noise_keys("solver.renoise", sol.renoise))
    keys.update(_noise_keys("finetune.noise", ft.noise))
    return keys


SCHEMA = _defaults()


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclasses.dataclass
class RunConfig:
    values: dict = dataclasses.field(default_factory=lambda: {k: v for k, (_, v) in SCHEMA.items()})

    def __getitem__(self, key):
        return self.values[key]

    def set(self, key, value, source="<flag>"):
        if key not in SCHEMA:
            raise ConfigError(f"{source}: unknown key {key!r}")
        conv = SCHEMA[key][0]
        try:
            self.values[key] = conv(value)
        except ValueError as exc:
            raise ConfigError(f"{source}: bad value for {key}: {exc}") from None

    def update_from_text(self, text, source="<config>"):
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
            self.set(key.strip(), value.strip(), f"{source}:{lineno}")

    def load(self, path):
        with open(path, encoding="utf-8") as fh:
            self.update_from_text(fh.read(), str(path))

    def dump(self):
        return "".join(f"{k} = {_format(self.values[k])}\n" for k in sorted(self.values))

    def write(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.dump())

    # -- typed views -------------------------------------------------------

    def noise(self, prefix, seed=0):
        v = self.values
        return NoiseField(
            sigma_min=v[f"{prefix}.sigma_min"],
            sigma_max=v[f"{prefix}.sigma_max"],
            grid=v[f"{prefix}.grid"],
            seed=seed,
            signal_dependence=v[f"{prefix}.signal_dependence"],
        )

    def decomposer(self):
        return DecomposerConfig(self["decomposer.smoothing_sigma"], self["decomposer.epsilon"])

    def light(self):
        return LightReduction(self["light.alpha"], self["light.gamma"])

    def enhancer(self):
        kind = self["enhancer.kind"]
        if kind == "retinex-gamma":
            return RetinexGammaEnhancer(self.decomposer(), self["enhancer.target_illum"])
        if kind == "identity":
            from pnplight.operators import IdentityEnhancer

            return IdentityEnhancer()
        raise ConfigError(f"unknown enhancer.kind {kind!r}")

    def solver(self, seed, capture=False):
        return SolverConfig(
            iterations=self["solver.iterations"],
            mu_start=self["solver.mu_start"],
            mu_end=self["solver.mu_end"],
            renoise=self.noise("solver.renoise"),
            seed=seed,
            capture_intermediates=capture,
        )

    def finetune(self):
        return FinetuneConfig(
            lam=self["finetune.lambda"],
            epochs=self["finetune.epochs"],
            learning_rate=self["finetune.learning_rate"],
            steps_per_epoch=self["finetune.steps_per_epoch"],
            unit_gain=self["finetune.unit_gain"],
            noise=self.noise("finetune.noise"),
            seed=self["seed"],
        )

    def bright(self):
        return BrightChannelParams(PatchSpec(self["bright.radius"]), self["bright.reduction"])

    def validate(self):
        """Build every typed view once so bad values fail before any work starts."""
        try:
            self.decomposer()
            self.light()
            self.enhancer()
            self.noise("noise")
            self.solver(0)
            self.finetune()
            self.bright()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
