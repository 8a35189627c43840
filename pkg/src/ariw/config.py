"""Training configuration and its flat ``key = value`` text format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .attacks import AttackSuite
from .encoder import INIT_KINDS
from .gradmap import GradMode

__all__ = ["LossWeights", "TrainConfig", "load_config", "parse_config", "format_config"]


@dataclass(frozen=True)
class LossWeights:
    mse: float = 1.5
    inv_psnr: float = 1.0
    global_ce: float = 1.0
    local_ce: float = 1.0

    def __post_init__(self):
        for name, v in dataclasses.asdict(self).items():
            if not (v >= 0 and v < float("inf")):
                raise ValueError(f"loss weight {name} must be finite and non-negative, got {v}")

    def scaled_quality(self, f: float) -> "LossWeights":
        """Image-quality weights times ``f``; the payload weights are untouched."""
        return LossWeights(self.mse * f, self.inv_psnr * f, self.global_ce, self.local_ce)

    def as_tuple(self) -> tuple:
        return (self.mse, self.inv_psnr, self.global_ce, self.local_ce)

    @classmethod
    def parse(cls, text: str) -> "LossWeights":
        vals = [float(t) for t in text.split(",")]
        if len(vals) != 4:
            raise ValueError(f"loss_weights needs four comma-separated values, got {text!r}")
        return cls(*vals)

    def __str__(self) -> str:
        return ", ".join(f"{v:g}" for v in self.as_tuple())


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    batch: int = 1
    steps: int = 3000
    image_size: int = 64
    L: int = 16
    alpha_train: float = 1.0
    init_kind: str = "ones"
    grad_mode: GradMode = GradMode()
    attack_suite: AttackSuite = field(default_factory=AttackSuite.desk_default)
    loss_weights: LossWeights = LossWeights()
    seed: int = 0
    kernel_size: int = 3
    up_factor: int = 8
    channels: tuple = (32, 64, 128, 64)
    head_hidden: int = 16
    train_iters: int = 1
    infer_iters: int = 2
    ema_decay: float = 0.99
    decoder_lr_scale: float = 1.0
    # PSNR feedback on the image-quality weights; psnr_target = 0 keeps them constant
    psnr_target: float = 0.0
    psnr_target_start: float = 20.0
    psnr_target_ramp: int = 0
    quality_gain: float = 0.01

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.batch != 1:
            raise ValueError("only batch = 1 is supported")
        if self.init_kind not in INIT_KINDS:
            raise ValueError(f"init_kind must be one of {INIT_KINDS}, got {self.init_kind!r}")
        if self.kernel_size not in (1, 3, 5, 7):
            raise ValueError(f"kernel_size must be 1, 3, 5 or 7, got {self.kernel_size}")
        if self.image_size % self.up_factor:
            raise ValueError(
                f"image_size {self.image_size} is not divisible by up_factor {self.up_factor}"
            )
        if self.L < 1 or self.lr <= 0 or self.alpha_train < 0:
            raise ValueError("L must be >= 1, lr > 0 and alpha_train >= 0")
        if self.train_iters < 1 or self.infer_iters < 1:
            raise ValueError("iteration counts must be >= 1")
        if not self.decoder_lr_scale > 0:
            raise ValueError(f"decoder_lr_scale must be positive, got {self.decoder_lr_scale}")
        if self.psnr_target < 0 or self.psnr_target_ramp < 0 or self.quality_gain < 0:
            raise ValueError("psnr_target, psnr_target_ramp and quality_gain must be >= 0")
        if not 0 <= self.ema_decay < 1:
            raise ValueError(f"ema_decay must lie in [0, 1), got {self.ema_decay}")
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if not isinstance(self.attack_suite, AttackSuite):
            object.__setattr__(self, "attack_suite", AttackSuite(self.attack_suite))

    @property
    def grid(self) -> int:
        return self.image_size // self.up_factor

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        """Plain text values, keyed by field name (the config file vocabulary)."""
        return {f.name: _format_value(getattr(self, f.name)) for f in dataclasses.fields(self)}


def _format_value(v) -> str:
    if isinstance(v, (AttackSuite, GradMode, LossWeights)):
        return str(v)
    if isinstance(v, tuple):
        return ", ".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


_PARSERS = {
    "lr": float,
    "batch": int,
    "steps": int,
    "image_size": int,
    "L": int,
    "alpha_train": float,
    "init_kind": str,
    "grad_mode": GradMode.parse,
    "attack_suite": AttackSuite.parse,
    "loss_weights": LossWeights.parse,
    "seed": int,
    "kernel_size": int,
    "up_factor": int,
    "channels": lambda s: tuple(int(t) for t in s.split(",")),
    "head_hidden": int,
    "train_iters": int,
    "infer_iters": int,
    "ema_decay": float,
    "psnr_target": float,
    "psnr_target_start": float,
    "psnr_target_ramp": int,
    "quality_gain": float,
    "decoder_lr_scale": float,
}


def parse_config(text: str) -> TrainConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if key not in _PARSERS:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        if key in values:
            raise ValueError(f"line {lineno}: duplicate config key {key!r}")
        try:
            values[key] = _PARSERS[key](value)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: bad value for {key}: {exc}") from exc
    return TrainConfig(**values)


def format_config(cfg: TrainConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in cfg.to_dict().items())


def load_config(path) -> TrainConfig:
    return parse_config(Path(path).read_text())
