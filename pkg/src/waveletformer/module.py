"""Parameter containers and the small set of layers the network is built from."""
from __future__ import annotations

from typing import Iterator

import numpy as np

from . import functional as F
from .tensor import Parameter, Tensor


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    """Normal(0, std) resampled until every draw lies within two standard deviations."""
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2.0
    return out * std


class Module:
    """Base class: parameters are found by walking attributes in definition order."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Parameter):
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self) -> dict[str, Parameter]:
        return dict(self.named_parameters())

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.grad = None

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Conv2d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel: int = 3, stride: int = 1,
                 padding: int | None = None, dilation: int = 1, bias: bool = True,
                 rng: np.random.Generator | None = None, zero_init: bool = False, dtype=np.float64):
        self.spec = F.ConvSpec(in_channels, out_channels, kernel, stride, dilation,
                               dilation * (kernel - 1) // 2 if padding is None else padding, bias)
        shape = (out_channels, in_channels, kernel, kernel)
        if zero_init:
            w = np.zeros(shape)
        else:
            bound = 1.0 / np.sqrt(in_channels * kernel * kernel)
            w = (rng or np.random.default_rng()).uniform(-bound, bound, shape)
        self.weight = Parameter(w.astype(dtype))
        self.bias = Parameter(np.zeros(out_channels, dtype=dtype)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        s = self.spec
        return F.conv2d(x, self.weight, self.bias, s.stride, s.padding, s.dilation)


class ConvTranspose2d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel: int = 3, stride: int = 2,
                 padding: int = 1, rng: np.random.Generator | None = None, dtype=np.float64):
        self.stride, self.padding = stride, padding
        bound = 1.0 / np.sqrt(in_channels * kernel * kernel)
        w = (rng or np.random.default_rng()).uniform(-bound, bound, (in_channels, out_channels, kernel, kernel))
        self.weight = Parameter(w.astype(dtype))
        self.bias = Parameter(np.zeros(out_channels, dtype=dtype))

    def forward(self, x: Tensor, output_size: tuple[int, int] | None = None) -> Tensor:
        return F.conv_transpose2d(x, self.weight, self.bias, self.stride, self.padding, output_size)


class Pointwise(Module):
    """Per-pixel linear map on ``[N,C,H,W]`` (a 1x1 convolution), truncated-normal init."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator,
                 std: float = 0.02, dtype=np.float64):
        self.weight = Parameter(trunc_normal(rng, (out_channels, in_channels, 1, 1), std).astype(dtype))
        self.bias = Parameter(np.zeros(out_channels, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias)


class Linear(Module):
    """``x[..., Cin] -> x[..., Cout]`` with truncated-normal weights."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator,
                 std: float = 0.02, dtype=np.float64):
        self.weight = Parameter(trunc_normal(rng, (in_features, out_features), std).astype(dtype))
        self.bias = Parameter(np.zeros(out_features, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, channels: int, axis: int = 1, eps: float = 1e-5, dtype=np.float64):
        self.axis, self.eps = axis, eps
        self.gamma = Parameter(np.ones(channels, dtype=dtype))
        self.beta = Parameter(np.zeros(channels, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.gamma, self.beta, self.axis, self.eps)
