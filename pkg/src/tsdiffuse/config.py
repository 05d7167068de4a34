"""Run configuration: defaults, validation, file loading, hashing."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .conditioner import EncoderConfig
from .denoiser import DenoiserConfig
from .errors import ConfigError


@dataclass
class ScheduleConfig:
    T: int = 500
    beta_start: float = 1e-4
    beta_end: float = 0.02

    def build(self):
        from .diffusion import build_schedule

        return build_schedule(self.T, self.beta_start, self.beta_end)


@dataclass
class UNetConfig:
    base_channels: int = 32
    groupnorm_groups: int = 8
    t_embed_dim: int = 64
    attn_levels: list = field(default_factory=lambda: ["enc3", "enc4", "dec1", "dec2"])


@dataclass
class ConditionerConfig:
    vocab_size: int = 2048
    width: int = 128
    layers: int = 4
    heads: int = 4
    max_len: int = 128


@dataclass
class TrainerConfig:
    epochs: int = 30
    batch_size: int = 64
    lr: float = 1e-4


@dataclass
class ForgeConfig:
    test_fraction: float = 0.05
    rounding: str = "floor"
    stock_stride: int = 100
    stock_fraction: float = 1.0
    ucr_per_dataset: int = 50


@dataclass
class PathsConfig:
    corpus: str = "corpus"
    checkpoints: str = "checkpoints"
    reports: str = "reports"


@dataclass
class RunConfig:
    seed: int = 0
    length: int = 100
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    unet: UNetConfig = field(default_factory=UNetConfig)
    conditioner: ConditionerConfig = field(default_factory=ConditionerConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    forge: ForgeConfig = field(default_factory=ForgeConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def denoiser_config(self) -> DenoiserConfig:
        return DenoiserConfig(
            base_channels=self.unet.base_channels,
            groupnorm_groups=self.unet.groupnorm_groups,
            t_embed_dim=self.unet.t_embed_dim,
            attn_levels=tuple(self.unet.attn_levels),
            text_dim=self.conditioner.width,
        )

    def encoder_config(self) -> EncoderConfig:
        c = self.conditioner
        return EncoderConfig(vocab_size=c.vocab_size, width=c.width, layers=c.layers, heads=c.heads, max_len=c.max_len)

    def validate(self):
        if self.length < 2:
            raise ConfigError(f"length must be >= 2, got {self.length}")
        self.schedule.build()
        self.denoiser_config().validate()
        self.encoder_config().validate()
        t = self.trainer
        if t.epochs < 0:
            raise ConfigError(f"trainer.epochs must be >= 0, got {t.epochs}")
        if t.batch_size < 1:
            raise ConfigError(f"trainer.batch_size must be >= 1, got {t.batch_size}")
        if not t.lr > 0:
            raise ConfigError(f"trainer.lr must be > 0, got {t.lr}")
        if not 0 < self.forge.test_fraction < 1:
            raise ConfigError(f"forge.test_fraction must be in (0, 1), got {self.forge.test_fraction}")
        if self.forge.rounding not in ("floor", "round"):
            raise ConfigError(f"forge.rounding must be 'floor' or 'round', got {self.forge.rounding!r}")
        return self

    def to_dict(self):
        return dataclasses.asdict(self)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        cfg = cls()
        for key, value in _flatten(data).items():
            cfg.set(key, value)
        return cfg

    def set(self, dotted: str, value):
        """Assign ``section.key`` (or a top-level key), coercing to the field's type."""
        parts = dotted.split(".")
        target = self
        for part in parts[:-1]:
            if not dataclasses.is_dataclass(target) or not hasattr(target, part):
                raise ConfigError(f"unknown config key {dotted!r}")
            target = getattr(target, part)
        name = parts[-1]
        fields = {f.name: f for f in dataclasses.fields(target)} if dataclasses.is_dataclass(target) else {}
        if name not in fields or dataclasses.is_dataclass(getattr(target, name)):
            raise ConfigError(f"unknown config key {dotted!r}")
        setattr(target, name, _coerce(getattr(target, name), value, dotted))


def _flatten(data, prefix=""):
    out = {}
    for k, v in data.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _coerce(current, value, key):
    try:
        if isinstance(current, bool):
            if isinstance(value, str):
                return value.strip().lower() in ("1", "true", "yes", "on")
            return bool(value)
        if isinstance(current, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if isinstance(current, float):
            return float(value)
        if isinstance(current, list):
            if isinstance(value, str):
                return [v.strip() for v in value.split(",") if v.strip()]
            return list(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value {value!r} for config key {key!r}") from None


def load_config(path) -> RunConfig:
    """Read a JSON object (nested or dotted keys) or flat ``key = value`` lines."""
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        return RunConfig.from_dict(data)
    cfg = RunConfig()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        cfg.set(key, value)
    return cfg
