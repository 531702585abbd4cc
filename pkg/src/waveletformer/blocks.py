"""WaveletFormer / IWaveletFormer blocks, the feature aggregation module and ASPP."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import functional as F
from .attention import AttentionConfig, WindowAttention, mhca
from .module import Conv2d, ConvTranspose2d, LayerNorm, Module, Pointwise
from .tensor import Tensor, concat, sigmoid
from .wavelet import dwt2d_stacked, idwt2d_stacked

ASPP_RATES = (3, 6, 9)


@dataclass(frozen=True)
class BlockConfig:
    in_channels: int
    out_channels: int
    heads: int = 2
    window: int = 4
    wavelet: str = "db2"
    conv_kernel: int = 3
    mlp_ratio: int = 4
    use_dwt: bool = True
    use_parallel_conv: bool = True
    rel_pos_bias: bool = False
    shift: int = 0

    def attention(self, channels: int) -> AttentionConfig:
        return AttentionConfig.for_channels(channels, self.heads, self.window,
                                            rel_pos_bias=self.rel_pos_bias, shift=self.shift)


class TransformerBody(Module):
    """Residual attention + MLP stack shared by both wavelet blocks.

    ``y' = y + MHSA(LN(y)) * conv(y)`` (plain ``y + MHSA(LN(y))`` without the
    parallel convolution), then ``y'' = y' + MLP(LN(y'))``.
    """

    def __init__(self, channels: int, cfg: BlockConfig, rng: np.random.Generator, dtype=np.float64):
        self.window = cfg.window
        self.norm1 = LayerNorm(channels, axis=1, dtype=dtype)
        self.attn = WindowAttention(cfg.attention(channels), rng, dtype=dtype)
        self.conv = (Conv2d(channels, channels, cfg.conv_kernel, rng=rng, dtype=dtype)
                     if cfg.use_parallel_conv else None)
        self.norm2 = LayerNorm(channels, axis=1, dtype=dtype)
        self.fc1 = Pointwise(channels, cfg.mlp_ratio * channels, rng, dtype=dtype)
        self.fc2 = Pointwise(cfg.mlp_ratio * channels, channels, rng, dtype=dtype)

    def forward(self, y: Tensor) -> Tensor:
        h, w = y.shape[2:]
        if h % self.window or w % self.window:
            raise ValueError(f"feature map {h}x{w} is not divisible by window {self.window}")
        a = self.attn(self.norm1(y))
        y = y + (a * self.conv(y) if self.conv is not None else a)
        return y + self.fc2(F.gelu(self.fc1(self.norm2(y))))


class WaveletFormerBlock(Module):
    """Encoder block: DWT to four half-size subbands, 1x1 projection, transformer body."""

    def __init__(self, cfg: BlockConfig, rng: np.random.Generator, dtype=np.float64):
        self.cfg = cfg
        c = cfg.in_channels
        self.down = None if cfg.use_dwt else Conv2d(c, 4 * c, 3, stride=2, padding=1, rng=rng, dtype=dtype)
        self.proj = Pointwise(4 * c, cfg.out_channels, rng, dtype=dtype)
        self.body = TransformerBody(cfg.out_channels, cfg, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        n, c, h, w = x.shape
        if h % 2 or w % 2:
            raise ValueError(f"WaveletFormer block needs even extents, got {h}x{w}")
        if self.down is None:
            # (N,4,C,h,w) -> (N,4C,h,w) keeps the (LL, LH, HL, HH) channel grouping
            sub = dwt2d_stacked(x, self.cfg.wavelet).reshape(n, 4 * c, h // 2, w // 2)
        else:
            sub = self.down(x)
        return self.body(self.proj(sub))


class IWaveletFormerBlock(Module):
    """Decoder block: 1x1 projection to four subband groups, IDWT, transformer body."""

    def __init__(self, cfg: BlockConfig, rng: np.random.Generator, dtype=np.float64):
        self.cfg = cfg
        co = cfg.out_channels
        self.proj = Pointwise(cfg.in_channels, 4 * co, rng, dtype=dtype)
        self.up = None if cfg.use_dwt else ConvTranspose2d(4 * co, co, 3, stride=2, padding=1, rng=rng, dtype=dtype)
        self.body = TransformerBody(co, cfg, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        n, _, h, w = x.shape
        co = self.cfg.out_channels
        z = self.proj(x)
        if self.up is None:
            y = idwt2d_stacked(z.reshape(n, 4, co, h, w), self.cfg.wavelet)
        else:
            y = self.up(z, output_size=(2 * h, 2 * w))
        return self.body(y)


class FeatureAggregation(Module):
    """Cross-attention gate fusing an encoder map with its mirror decoder map.

    ``Y = MHCA(f_out, f_idwt)``, ``Z = sigmoid(Y) * f_idwt``, output ``Z + f_out``.
    """

    def __init__(self, channels: int, heads: int, window: int, rng: np.random.Generator,
                 dtype=np.float64, **attn_kw):
        cfg = AttentionConfig.for_channels(channels, heads, window, **attn_kw)
        self.attn = WindowAttention(cfg, rng, dtype=dtype)

    def forward(self, f_out: Tensor, f_idwt: Tensor) -> Tensor:
        if f_out.shape != f_idwt.shape:
            raise ValueError(f"FAM inputs differ in shape: {f_out.shape} vs {f_idwt.shape}")
        gate = sigmoid(mhca(f_out, f_idwt, self.attn))
        return gate * f_idwt + f_out


class ASPP(Module):
    """Three same-padded 3x3 dilated convolutions (rates 3, 6, 9), concatenated, then a 1x1 reduction."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator,
                 rates: tuple[int, ...] = ASPP_RATES, dtype=np.float64):
        self.branches = [Conv2d(in_channels, out_channels, 3, dilation=r, padding=r, rng=rng, dtype=dtype)
                         for r in rates]
        self.reduce = Conv2d(len(rates) * out_channels, out_channels, 1, rng=rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return self.reduce(concat([b(x) for b in self.branches], axis=1))


def waveletformer_forward(x: Tensor, block: WaveletFormerBlock) -> Tensor:
    return block(x)


def iwaveletformer_forward(x: Tensor, block: IWaveletFormerBlock) -> Tensor:
    return block(x)


def fam_forward(f_out: Tensor, f_idwt: Tensor, fam: FeatureAggregation) -> Tensor:
    return fam(f_out, f_idwt)


def aspp_forward(x: Tensor, aspp: ASPP) -> Tensor:
    return aspp(x)
