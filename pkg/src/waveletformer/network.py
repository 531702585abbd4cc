"""Encoder / ASPP / decoder assembly with FAM skip fusion and a global residual."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .blocks import ASPP, BlockConfig, FeatureAggregation, IWaveletFormerBlock, WaveletFormerBlock
from .flops import count_macs
from .module import Conv2d, Module
from .tensor import Tensor, as_tensor, no_grad
from .wavelet import WaveletSpec

ABLATIONS = {
    "full": {},
    "w/o-dwt": {"use_dwt": False},
    "w/o-parallel": {"use_parallel_conv": False},
    "w/o-fam": {"use_fam": False},
    "w/o-aspp": {"use_aspp": False},
}


@dataclass(frozen=True)
class NetworkConfig:
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

    def __post_init__(self):
        if self.stages < 1 or self.base_channels < 1:
            raise ValueError("stages and base_channels must be positive")
        mults = tuple(self.channel_mults) or tuple(2 ** (i + 1) for i in range(self.stages))
        if len(mults) != self.stages:
            raise ValueError(f"need {self.stages} channel multipliers, got {len(mults)}")
        object.__setattr__(self, "channel_mults", mults)
        object.__setattr__(self, "wavelet", WaveletSpec(self.wavelet).family)
        if self.dtype not in ("float64", "float32"):
            raise ValueError("dtype must be float64 or float32")
        for c in self.channels:
            if c % self.heads:
                raise ValueError(f"{c} channels are not divisible by {self.heads} heads")

    @property
    def channels(self) -> tuple[int, ...]:
        """Feature widths at full resolution and after each encoder stage."""
        return (self.base_channels,) + tuple(self.base_channels * m for m in self.channel_mults)

    @property
    def multiple(self) -> int:
        return 2 ** self.stages * self.window

    def check_extents(self, h: int, w: int) -> None:
        m = self.multiple
        if h % m or w % m:
            raise ValueError(f"input extents {h}x{w} must be multiples of {m} (2^{self.stages} x window {self.window})")

    def replace(self, **changes) -> "NetworkConfig":
        return dataclasses.replace(self, **changes)

    def ablate(self, variant: str) -> "NetworkConfig":
        if variant not in ABLATIONS:
            raise ValueError(f"unknown ablation {variant!r}; choose from {sorted(ABLATIONS)}")
        return self.replace(**ABLATIONS[variant])

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["channel_mults"] = list(self.channel_mults)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        d = dict(d)
        if "channel_mults" in d:
            d["channel_mults"] = tuple(d["channel_mults"])
        return cls(**d)


class WaveletFormerNet(Module):
    def __init__(self, cfg: NetworkConfig, seed: int = 0):
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        dt = np.dtype(cfg.dtype)
        ch = cfg.channels

        def block_cfg(cin, cout, depth):
            shift = cfg.window // 2 if cfg.shifted_windows and depth % 2 else 0
            return BlockConfig(cin, cout, cfg.heads, cfg.window, cfg.wavelet, 3, cfg.mlp_ratio,
                               cfg.use_dwt, cfg.use_parallel_conv, cfg.rel_pos_bias, shift)

        self.head = Conv2d(3, ch[0], 3, rng=rng, dtype=dt)
        self.encoders = [WaveletFormerBlock(block_cfg(ch[i], ch[i + 1], i), rng, dt) for i in range(cfg.stages)]
        self.aspp = ASPP(ch[-1], ch[-1], rng, dtype=dt) if cfg.use_aspp else None
        self.decoders = [IWaveletFormerBlock(block_cfg(ch[i + 1], ch[i], i + 1), rng, dt)
                         for i in reversed(range(cfg.stages))]
        self.fams = ([FeatureAggregation(ch[i], cfg.heads, cfg.window, rng, dt, rel_pos_bias=cfg.rel_pos_bias)
                      for i in reversed(range(cfg.stages))] if cfg.use_fam else [])
        self.tail = Conv2d(ch[0], 3, 3, rng=rng, zero_init=True, dtype=dt)

    def forward(self, x: Tensor) -> Tensor:
        x = as_tensor(x, dtype=np.dtype(self.cfg.dtype))
        if x.ndim != 4 or x.shape[1] != 3:
            raise ValueError(f"expected input [N,3,H,W], got {x.shape}")
        self.cfg.check_extents(*x.shape[2:])
        h = self.head(x)
        skips = [h]
        for enc in self.encoders:
            h = enc(h)
            skips.append(h)
        if self.aspp is not None:
            h = self.aspp(h)
        for j, dec in enumerate(self.decoders):
            h = dec(h)
            skip = skips[self.cfg.stages - 1 - j]
            h = self.fams[j](skip, h) if self.fams else skip + h
        out = self.tail(h)
        return x + out if self.cfg.global_residual else out


def build(cfg: NetworkConfig, seed: int = 0) -> WaveletFormerNet:
    return WaveletFormerNet(cfg, seed)


def forward(model: WaveletFormerNet, x) -> Tensor:
    return model(x)


def param_count(model: Module) -> int:
    return model.param_count()


def flop_count(model: WaveletFormerNet, h: int, w: int) -> int:
    """Multiply-accumulates of one forward pass on a single ``3 x h x w`` image."""
    x = np.zeros((1, 3, h, w), dtype=np.dtype(model.cfg.dtype))
    with no_grad(), count_macs() as macs:
        model(x)
    return macs[0]


def wide_config() -> NetworkConfig:
    """A wider configuration, about 2.6M parameters, for size and cost reporting."""
    return NetworkConfig(stages=3, base_channels=24, heads=4, window=8, channel_mults=(2, 4, 8))
