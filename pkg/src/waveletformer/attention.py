"""Window-partitioned multi-head self- and cross-attention."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import functional as F
from .module import Linear, Module, trunc_normal
from .tensor import Parameter, Tensor, roll, take

# large finite negative score; masked weights underflow to exactly 0
_MASK_VALUE = -1e9


@dataclass(frozen=True)
class AttentionConfig:
    heads: int
    head_dim: int
    window: int
    rel_pos_bias: bool = False
    shift: int = 0

    def __post_init__(self):
        if self.heads < 1 or self.head_dim < 1 or self.window < 1:
            raise ValueError("heads, head_dim and window must be positive")
        if not 0 <= self.shift < self.window:
            raise ValueError("shift must lie in [0, window)")

    @property
    def channels(self) -> int:
        return self.heads * self.head_dim

    @classmethod
    def for_channels(cls, channels: int, heads: int, window: int, **kw) -> "AttentionConfig":
        if channels % heads:
            raise ValueError(f"{channels} channels cannot be split into {heads} heads")
        return cls(heads, channels // heads, window, **kw)


def window_partition(x: Tensor, w: int) -> Tensor:
    """``[N,C,H,W] -> [N*(H/w)*(W/w), w*w, C]``; windows and tokens in raster order."""
    n, c, h, wd = x.shape
    if h % w or wd % w:
        raise ValueError(f"spatial extents {h}x{wd} are not divisible by window {w}")
    t = x.reshape(n, c, h // w, w, wd // w, w).transpose(0, 2, 4, 3, 5, 1)
    return t.reshape(n * (h // w) * (wd // w), w * w, c)


def window_merge(tokens: Tensor, n: int, h: int, wd: int) -> Tensor:
    """Inverse of :func:`window_partition`."""
    b, t, c = tokens.shape
    w = int(round(math.sqrt(t)))
    if w * w != t or b != n * (h // w) * (wd // w):
        raise ValueError(f"token shape {tokens.shape} does not tile a {n}x{h}x{wd} map")
    x = tokens.reshape(n, h // w, wd // w, w, w, c).transpose(0, 5, 1, 3, 2, 4)
    return x.reshape(n, c, h, wd)


def relative_position_index(w: int) -> np.ndarray:
    coords = np.stack(np.meshgrid(np.arange(w), np.arange(w), indexing="ij")).reshape(2, -1)
    rel = coords[:, :, None] - coords[:, None, :] + (w - 1)
    return rel[0] * (2 * w - 1) + rel[1]


def shifted_window_mask(h: int, wd: int, w: int, shift: int) -> np.ndarray:
    """Additive ``[nW, w*w, w*w]`` mask blocking attention across wrapped regions."""
    region = np.zeros((h, wd), dtype=int)
    label = 0
    for hs in (slice(0, -w), slice(-w, -shift), slice(-shift, None)):
        for ws in (slice(0, -w), slice(-w, -shift), slice(-shift, None)):
            region[hs, ws] = label
            label += 1
    ids = region.reshape(h // w, w, wd // w, w).transpose(0, 2, 1, 3).reshape(-1, w * w)
    return np.where(ids[:, :, None] == ids[:, None, :], 0.0, _MASK_VALUE)


class WindowAttention(Module):
    """Scaled dot-product attention inside non-overlapping windows.

    Used for self-attention (W-MHSA) when queries and keys/values come from
    the same map, and for cross-attention (MHCA) otherwise.
    """

    def __init__(self, cfg: AttentionConfig, rng: np.random.Generator, dtype=np.float64):
        self.cfg = cfg
        c = cfg.channels
        self.q = Linear(c, c, rng, dtype=dtype)
        self.k = Linear(c, c, rng, dtype=dtype)
        self.v = Linear(c, c, rng, dtype=dtype)
        self.proj = Linear(c, c, rng, dtype=dtype)
        if cfg.rel_pos_bias:
            size = (2 * cfg.window - 1) ** 2
            self.rel_bias = Parameter(trunc_normal(rng, (size, cfg.heads)).astype(dtype))
            self._rel_index = relative_position_index(cfg.window)

    def _split_heads(self, t: Tensor) -> Tensor:
        b, n, _ = t.shape
        return t.reshape(b, n, self.cfg.heads, self.cfg.head_dim).transpose(0, 2, 1, 3)

    def attend(self, q_tokens: Tensor, kv_tokens: Tensor, mask: np.ndarray | None = None,
               return_weights: bool = False):
        """Attention on window tokens ``[B, T, C]``; ``mask`` is ``[nW, T, T]``."""
        cfg = self.cfg
        if q_tokens.shape[-1] != cfg.channels or kv_tokens.shape[-1] != cfg.channels:
            raise ValueError(f"token channels must equal heads*head_dim = {cfg.channels}")
        if q_tokens.shape != kv_tokens.shape:
            raise ValueError(f"query {q_tokens.shape} and key/value {kv_tokens.shape} tokens differ")
        b, t, c = q_tokens.shape
        q = self._split_heads(self.q(q_tokens))
        k = self._split_heads(self.k(kv_tokens))
        v = self._split_heads(self.v(kv_tokens))
        scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(cfg.head_dim))
        if cfg.rel_pos_bias:
            bias = take(self.rel_bias, self._rel_index).transpose(2, 0, 1)
            scores = scores + bias
        if mask is not None:
            nw = mask.shape[0]
            scores = scores.reshape(b // nw, nw, cfg.heads, t, t) + mask[None, :, None].astype(scores.dtype)
            scores = scores.reshape(b, cfg.heads, t, t)
        weights = F.softmax(scores, axis=-1)
        mixed = (weights @ v).transpose(0, 2, 1, 3).reshape(b, t, c)
        out = self.proj(mixed)
        return (out, weights) if return_weights else out

    def forward(self, query_src: Tensor, kv_src: Tensor | None = None) -> Tensor:
        """Attention on ``[N,C,H,W]`` maps, partitioned into windows (shifted if configured)."""
        self_attn = kv_src is None or kv_src is query_src
        if not self_attn and query_src.shape != kv_src.shape:
            raise ValueError(f"query map {query_src.shape} and key/value map {kv_src.shape} differ")
        n, _, h, wd = query_src.shape
        w, s = self.cfg.window, self.cfg.shift
        mask = None
        if s:
            query_src = roll(query_src, (-s, -s), (2, 3))
            kv_src = None if self_attn else roll(kv_src, (-s, -s), (2, 3))
            mask = shifted_window_mask(h, wd, w, s)
        qt = window_partition(query_src, w)
        kvt = qt if self_attn else window_partition(kv_src, w)
        out = window_merge(self.attend(qt, kvt, mask), n, h, wd)
        return roll(out, (s, s), (2, 3)) if s else out


def window_mhsa(tokens: Tensor, attn: WindowAttention, mask: np.ndarray | None = None) -> Tensor:
    """Self-attention over window tokens ``[B, w*w, C]``."""
    return attn.attend(tokens, tokens, mask)


def mhca(query_src: Tensor, kv_src: Tensor, attn: WindowAttention) -> Tensor:
    """Cross-attention: queries from ``query_src``, keys and values from ``kv_src``."""
    if query_src.shape != kv_src.shape:
        raise ValueError(f"mhca inputs differ in shape: {query_src.shape} vs {kv_src.shape}")
    return attn(query_src, kv_src)
