"""Flat ``key=value`` run configuration.

Precedence is command-line override > config file > built-in default.  The
``preset`` key (``toy`` or ``real``) picks the defaults for the size-dependent
keys; every other key has a single default.
"""

from __future__ import annotations

from pathlib import Path

from .data import BenchmarkSpec
from .errors import ConfigError
from .evaluation import ClassifierConfig, SynthesisConfig
from .perturbation import MODES, PerturbConfig
from .training import TrainConfig


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_int(text: str):
    return None if text.strip().lower() in ("", "none") else int(text)


def _optional_float(text: str):
    return None if text.strip().lower() in ("", "none", "0", "0.0") else float(text)


def _choice(*options):
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text
    return parse


# key -> (parser, toy default, real default)
SCHEMA = {
    "seed": (int, 0, 0),
    "preset": (_choice("toy", "real"), "toy", "real"),
    "flow.blocks": (int, 5, 5),
    "flow.hidden": (int, 64, 1024),
    "flow.clamp": (float, 2.0, 2.0),
    "embed.dim": (int, 0, 0),
    "embed.anchors": (int, 4, 4),
    "embed.identity_init": (_bool, True, True),
    "train.epochs": (int, 60, 60),
    "train.batch_size": (int, 64, 256),
    "train.lr": (float, 2e-4, 2e-4),
    "train.beta1": (float, 0.9, 0.9),
    "train.beta2": (float, 0.999, 0.999),
    "train.eps": (float, 1e-8, 1e-8),
    "train.gamma": (float, 1.0, 1.0),
    "train.grad_clip": (_optional_float, 5.0, 5.0),
    "train.log": (str, "train_log.csv", "train_log.csv"),
    "train.seed": (_optional_int, None, None),
    "perturb.beta": (float, 0.2, 0.2),
    "perturb.mode": (_choice(*MODES), "gaussian", "gaussian"),
    "perturb.seed": (_optional_int, None, None),
    "synth.per_class_count": (int, 50, 400),
    "synth.temperature": (float, 1.0, 1.0),
    "synth.seed": (_optional_int, None, None),
    "clf.epochs": (int, 30, 30),
    "clf.lr": (float, 1e-3, 1e-3),
    "clf.batch_size": (int, 128, 128),
    "clf.seed": (_optional_int, None, None),
    "bench.n_seen": (int, 15, 15),
    "bench.n_unseen": (int, 5, 5),
    "bench.d": (int, 32, 32),
    "bench.a": (int, 16, 16),
    "bench.samples_per_class": (int, 300, 300),
    "bench.cov_lo": (float, 0.5, 0.5),
    "bench.cov_hi": (float, 1.5, 1.5),
    "bench.map_scale": (float, 1.0, 1.0),
    "bench.seed": (_optional_int, None, None),
}


def parse_assignments(lines, source: str = "<overrides>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        out[key.strip()] = value.strip()
    return out


class RunConfig:
    """Validated configuration values; build the typed configs from here."""

    def __init__(self, values: dict | None = None):
        raw = dict(values or {})
        unknown = sorted(set(raw) - set(SCHEMA))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        preset = raw.get("preset", "toy")
        if not isinstance(preset, str) or preset not in ("toy", "real"):
            raise ConfigError(f"invalid value for preset: {preset!r} (expected toy or real)")
        col = 1 if preset == "toy" else 2
        self.values = {}
        for key, spec in SCHEMA.items():
            if key in raw:
                value = raw[key]
                if isinstance(value, str):
                    try:
                        value = spec[0](value)
                    except (TypeError, ValueError) as exc:
                        raise ConfigError(f"invalid value for {key}: {exc}") from None
                self.values[key] = value
            else:
                self.values[key] = spec[col]
        self._validate()

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> "RunConfig":
        values: dict = {}
        if path is not None:
            path = Path(path)
            if not path.is_file():
                raise ConfigError(f"config file not found: {path}")
            values.update(parse_assignments(path.read_text().splitlines(), str(path)))
        values.update(overrides or {})
        return cls(values)

    def __getitem__(self, key: str):
        return self.values[key]

    def seed_for(self, section: str) -> int:
        own = self.values.get(f"{section}.seed")
        return self["seed"] if own is None else own

    def _validate(self) -> None:
        checks = {
            "flow.blocks": lambda v: v >= 0,
            "flow.hidden": lambda v: v >= 1,
            "flow.clamp": lambda v: v > 0,
            "embed.dim": lambda v: v >= 0,
            "embed.anchors": lambda v: v >= 1,
            "synth.per_class_count": lambda v: v >= 1,
            "synth.temperature": lambda v: v > 0,
            "clf.epochs": lambda v: v >= 0,
            "clf.lr": lambda v: v > 0,
            "clf.batch_size": lambda v: v >= 1,
            "perturb.beta": lambda v: v >= 0,
        }
        for key, ok in checks.items():
            if not ok(self.values[key]):
                raise ConfigError(f"invalid value for {key}: {self.values[key]!r}")
        try:
            self.train_config()
            self.bench_spec()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def to_text(self) -> str:
        lines = []
        for key in sorted(self.values):
            value = self.values[key]
            lines.append(f"{key}={'none' if value is None else value}")
        return "\n".join(lines) + "\n"

    # typed views

    def train_config(self) -> TrainConfig:
        v = self.values
        return TrainConfig(epochs=v["train.epochs"], batch_size=v["train.batch_size"],
                           learning_rate=v["train.lr"], adam_beta1=v["train.beta1"],
                           adam_beta2=v["train.beta2"], adam_eps=v["train.eps"],
                           gamma=v["train.gamma"], grad_clip=v["train.grad_clip"],
                           seed=self.seed_for("train"))

    def perturb_config(self) -> PerturbConfig:
        return PerturbConfig(beta=self["perturb.beta"], mode=self["perturb.mode"],
                             seed=self.seed_for("perturb"))

    def synthesis_config(self) -> SynthesisConfig:
        return SynthesisConfig(per_class_count=self["synth.per_class_count"],
                               latent_temperature=self["synth.temperature"],
                               seed=self.seed_for("synth"))

    def classifier_config(self) -> ClassifierConfig:
        return ClassifierConfig(epochs=self["clf.epochs"], learning_rate=self["clf.lr"],
                                batch_size=self["clf.batch_size"], seed=self.seed_for("clf"))

    def bench_spec(self) -> BenchmarkSpec:
        v = self.values
        return BenchmarkSpec(n_seen=v["bench.n_seen"], n_unseen=v["bench.n_unseen"], d=v["bench.d"],
                             a=v["bench.a"], samples_per_class=v["bench.samples_per_class"],
                             class_cov_scale=(v["bench.cov_lo"], v["bench.cov_hi"]),
                             map_scale=v["bench.map_scale"], seed=self.seed_for("bench"))
