"""Plain-text ``key = value`` run configuration.

Lines are ``key = value``; ``#`` starts a comment; blank lines are ignored.
Every key must name a :class:`RunConfig` field. Booleans accept
``true/false/yes/no/on/off/1/0``; tuples are comma separated; ``none`` clears
an optional value.
"""
from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, fields
from pathlib import Path

from .losses import LossWeights
from .network import ABLATIONS, NetworkConfig
from .optim import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # network
    stages: int = 3
    base_channels: int = 16
    channel_mults: tuple[int, ...] = ()
    heads: int = 2
    window: int = 4
    mlp_ratio: int = 4
    wavelet: str = "db2"
    use_dwt: bool = True
    use_parallel_conv: bool = True
    use_fam: bool = True
    use_aspp: bool = True
    global_residual: bool = True
    rel_pos_bias: bool = False
    shifted_windows: bool = False
    dtype: str = "float64"
    init_seed: int = 0
    # loss weights
    w_l1: float = 1.0
    w_msssim: float = 0.4
    w_perceptual: float = 0.01
    # schedule and optimiser
    lr: float = 1e-4
    steps: int = 500
    clip: float | None = 1.0
    # sampling and augmentation
    batch: int = 1
    crop: int = 64
    augment: bool = True
    seed: int = 0
    log_every: int = 1
    ckpt_every: int = 0
    # synthetic haze ranges
    beta_min: float = 0.5
    beta_max: float = 1.5
    depth: str = "blocks"
    # paths
    data: str | None = None
    out: str | None = None

    def network(self) -> NetworkConfig:
        names = {f.name for f in fields(NetworkConfig)}
        return NetworkConfig(**{k: v for k, v in dataclasses.asdict(self).items() if k in names})

    def weights(self) -> LossWeights:
        return LossWeights(self.w_l1, self.w_msssim, self.w_perceptual)

    def train_config(self) -> TrainConfig:
        return TrainConfig(steps=self.steps, batch=self.batch, crop=self.crop, seed=self.seed, lr=self.lr,
                           weights=self.weights(), clip=self.clip, augment=self.augment,
                           log_every=self.log_every, ckpt_every=self.ckpt_every, out_dir=self.out)

    def apply_ablation(self, variant: str) -> "RunConfig":
        if variant not in ABLATIONS:
            raise ConfigError(f"unknown ablation {variant!r}; choose from {', '.join(sorted(ABLATIONS))}")
        return dataclasses.replace(self, **ABLATIONS[variant])

    def validate(self) -> None:
        try:
            self.network().check_extents(self.crop, self.crop)
            self.weights()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.steps < 0 or self.batch < 1:
            raise ConfigError("steps must be >= 0 and batch >= 1")
        if not 0 <= self.beta_min <= self.beta_max:
            raise ConfigError(f"invalid beta range {self.beta_min}..{self.beta_max}")

    def dumps(self) -> str:
        return "".join(f"{f.name} = {_format(getattr(self, f.name))}\n" for f in fields(self))

    def write(self, path) -> None:
        Path(path).write_text(self.dumps())


_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def _format(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(name: str, raw: str, hint):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if type(None) in args:
        if raw.lower() == "none":
            return None
        hint = next(a for a in args if a is not type(None))
        origin, args = typing.get_origin(hint), typing.get_args(hint)
    try:
        if hint is bool:
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if origin is tuple:
            return tuple(args[0](p.strip()) for p in raw.split(",") if p.strip())
        return hint(raw)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    hints = typing.get_type_hints(RunConfig)
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in hints:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _coerce(key, raw, hints[key])
    return dataclasses.replace(base or RunConfig(), **values)


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())
