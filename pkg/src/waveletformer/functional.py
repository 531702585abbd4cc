"""Neural-network primitives with hand-written adjoints.

Convolutions use zero padding and cross-correlation (no kernel flip), with
dilation and stride. The gather/scatter over kernel taps is done with ``k*k``
strided slices, which keeps both passes in vectorised numpy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .flops import add_macs
from .tensor import Tensor, _record, matmul, relu, sigmoid  # noqa: F401

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: int = 3
    stride: int = 1
    dilation: int = 1
    padding: int = 0
    bias: bool = True

    def __post_init__(self):
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be positive")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError(f"kernel must be odd and positive, got {self.kernel}")
        if self.stride < 1 or self.dilation < 1 or self.padding < 0:
            raise ValueError("stride and dilation must be >= 1 and padding >= 0")

    @property
    def receptive_field(self) -> int:
        return self.dilation * (self.kernel - 1) + 1

    def output_extent(self, n: int) -> int:
        out = (n + 2 * self.padding - self.receptive_field) // self.stride + 1
        if out < 1:
            raise ValueError(
                f"input extent {n} too small for receptive field {self.receptive_field} "
                f"with padding {self.padding}"
            )
        return out


def _out_extent(n: int, k: int, s: int, r: int, p: int) -> int:
    out = (n + 2 * p - r * (k - 1) - 1) // s + 1
    if out < 1:
        raise ValueError(f"non-positive output extent for input {n}, kernel {k}, dilation {r}, padding {p}")
    return out


def _im2col(xp: np.ndarray, k: int, s: int, r: int, ho: int, wo: int) -> np.ndarray:
    n, c = xp.shape[:2]
    cols = np.empty((n, c, k, k, ho, wo), dtype=xp.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j] = xp[:, :, i * r: i * r + s * (ho - 1) + 1: s, j * r: j * r + s * (wo - 1) + 1: s]
    return cols.reshape(n, c * k * k, ho * wo)


def _col2im(cols: np.ndarray, padded_shape, k: int, s: int, r: int, ho: int, wo: int) -> np.ndarray:
    n, c = padded_shape[:2]
    cols = cols.reshape(n, c, k, k, ho, wo)
    out = np.zeros(padded_shape, dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            out[:, :, i * r: i * r + s * (ho - 1) + 1: s, j * r: j * r + s * (wo - 1) + 1: s] += cols[:, :, i, j]
    return out


def _pad(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def _crop(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return x[:, :, p:-p, p:-p]


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
           padding: int = 0, dilation: int = 1) -> Tensor:
    """2D cross-correlation of ``x[N,Cin,H,W]`` with ``weight[Cout,Cin,k,k]``."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError("conv2d expects 4D input and weight")
    n, cin, h, w = x.shape
    cout, wcin, k, k2 = weight.shape
    if wcin != cin or k != k2:
        raise ValueError(f"weight shape {weight.shape} does not match input channels {cin}")
    if bias is not None and bias.shape != (cout,):
        raise ValueError(f"bias shape {bias.shape} does not match {cout} output channels")
    s, r, p = stride, dilation, padding
    ho, wo = _out_extent(h, k, s, r, p), _out_extent(w, k, s, r, p)
    xp = _pad(x.data, p)
    pointwise = k == 1 and s == 1 and p == 0
    cols = x.data.reshape(n, cin, h * w) if pointwise else _im2col(xp, k, s, r, ho, wo)
    w2 = weight.data.reshape(cout, cin * k * k)
    out = np.matmul(w2, cols)
    if bias is not None:
        out += bias.data[:, None]
    add_macs(n * cout * ho * wo * cin * k * k)

    def vjp(g):
        g2 = g.reshape(n, cout, ho * wo)
        gw = np.einsum("ncp,nkp->ck", g2, cols).reshape(weight.shape)
        gcols = np.matmul(w2.T, g2)
        if pointwise:
            gx = gcols.reshape(x.shape)
        else:
            gx = _crop(_col2im(gcols, xp.shape, k, s, r, ho, wo), p)
        gb = g.sum(axis=(0, 2, 3)) if bias is not None else None
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return _record(out.reshape(n, cout, ho, wo), parents, vjp, "conv2d")


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
                     padding: int = 0, output_size: tuple[int, int] | None = None,
                     dilation: int = 1) -> Tensor:
    """Adjoint of :func:`conv2d`: maps ``x[N,Cin,H,W]`` with ``weight[Cin,Cout,k,k]`` up.

    ``output_size`` resolves the ambiguity of strided transposes; it defaults
    to the smallest extent whose strided convolution returns to ``H, W``.
    """
    n, cin, h, w = x.shape
    wcin, cout, k, _ = weight.shape
    if wcin != cin:
        raise ValueError(f"weight shape {weight.shape} does not match input channels {cin}")
    s, r, p = stride, dilation, padding
    if output_size is None:
        output_size = ((h - 1) * s - 2 * p + r * (k - 1) + 1, (w - 1) * s - 2 * p + r * (k - 1) + 1)
    hy, wy = output_size
    if _out_extent(hy, k, s, r, p) != h or _out_extent(wy, k, s, r, p) != w:
        raise ValueError(f"output_size {output_size} incompatible with input {h}x{w}")
    padded = (n, cout, hy + 2 * p, wy + 2 * p)
    w2 = weight.data.reshape(cin, cout * k * k)
    x2 = x.data.reshape(n, cin, h * w)
    out = _crop(_col2im(np.matmul(w2.T, x2), padded, k, s, r, h, w), p)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    add_macs(n * cout * h * w * cin * k * k)

    def vjp(g):
        gcols = _im2col(_pad(g, p), k, s, r, h, w)
        gx = np.matmul(w2, gcols).reshape(x.shape)
        gw = np.einsum("ncp,nkp->ck", x2, gcols).reshape(weight.shape)
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return _record(np.ascontiguousarray(out), parents, vjp, "conv_transpose2d")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _record(out, (x,), vjp, "softmax")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, axis: int = -1, eps: float = 1e-5) -> Tensor:
    """Normalise over one axis, then apply a per-channel affine map."""
    axis = axis % x.ndim
    c = x.shape[axis]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ValueError(f"gamma/beta must have shape ({c},)")
    bshape = [1] * x.ndim
    bshape[axis] = c
    mu = x.data.mean(axis=axis, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=axis, keepdims=True) + eps)
    xhat = xc * inv
    gm = gamma.data.reshape(bshape)
    out = xhat * gm + beta.data.reshape(bshape)
    other = tuple(i for i in range(x.ndim) if i != axis)

    def vjp(g):
        gxhat = g * gm
        gx = inv * (gxhat - gxhat.mean(axis=axis, keepdims=True)
                    - xhat * (gxhat * xhat).mean(axis=axis, keepdims=True))
        return gx, (g * xhat).sum(axis=other), g.sum(axis=other)

    return _record(out, (x, gamma, beta), vjp, "layer_norm")


def gelu(x: Tensor) -> Tensor:
    """Exact (erf-based) GELU."""
    cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    out = x.data * cdf

    def vjp(g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * x.data * x.data)
        return (g * (cdf + x.data * pdf),)

    return _record(out, (x,), vjp, "gelu")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x[..., Cin] @ weight[Cin, Cout] + bias``."""
    y = matmul(x, weight)
    return y + bias if bias is not None else y


def avg_pool2(x: Tensor) -> Tensor:
    """2x2 average pooling with stride 2; odd trailing rows/columns are dropped."""
    n, c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    if h2 < 1 or w2 < 1:
        raise ValueError("input too small for 2x2 pooling")
    xs = x.data[:, :, : 2 * h2, : 2 * w2]
    out = xs.reshape(n, c, h2, 2, w2, 2).mean(axis=(3, 5))

    def vjp(g):
        gx = np.zeros_like(x.data)
        gx[:, :, : 2 * h2, : 2 * w2] = np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * 0.25
        return (gx,)

    return _record(out, (x,), vjp, "avg_pool2")


def separable_filter(x: Tensor, taps: np.ndarray) -> Tensor:
    """Valid (unpadded) correlation of every channel with ``outer(taps, taps)``."""
    taps = np.asarray(taps, dtype=x.dtype)
    k = taps.size
    n, c, h, w = x.shape
    ho, wo = h - k + 1, w - k + 1
    if ho < 1 or wo < 1:
        raise ValueError(f"image {h}x{w} smaller than the {k}-tap filter")
    rows = np.zeros((n, c, ho, w), dtype=x.dtype)
    for i in range(k):
        rows += taps[i] * x.data[:, :, i:i + ho, :]
    out = np.zeros((n, c, ho, wo), dtype=x.dtype)
    for j in range(k):
        out += taps[j] * rows[:, :, :, j:j + wo]

    def vjp(g):
        grows = np.zeros_like(rows)
        for j in range(k):
            grows[:, :, :, j:j + wo] += taps[j] * g
        gx = np.zeros_like(x.data)
        for i in range(k):
            gx[:, :, i:i + ho, :] += taps[i] * grows
        return (gx,)

    return _record(out, (x,), vjp, "separable_filter")
