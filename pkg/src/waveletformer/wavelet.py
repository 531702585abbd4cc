"""Orthonormal 2D discrete wavelet transform with periodized boundaries.

Analysis along one axis of length ``N`` (even) is

    a[n] = sum_k h[k] x[(2n + k) mod N]
    d[n] = sum_k g[k] x[(2n + k) mod N],   g[k] = (-1)**k h[L-1-k]

which is an orthogonal matrix, so synthesis is its transpose and each
transform is the other's adjoint. The 2D transform filters along the width
first, then the height. Subband names give the filter along the width, then
the filter along the height: ``lh`` is low-pass across columns and high-pass
down rows (horizontal detail), ``hl`` the vertical detail, ``hh`` the diagonal.
Stacked subbands are always ordered (LL, LH, HL, HH).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, _record, concat, getitem

_SQ3 = math.sqrt(3.0)

_LOWPASS = {
    "haar": np.array([1.0, 1.0]) / math.sqrt(2.0),
    "db2": np.array([1.0 + _SQ3, 3.0 + _SQ3, 3.0 - _SQ3, 1.0 - _SQ3]) / (4.0 * math.sqrt(2.0)),
    "db4": np.array([
        0.23037781330889650086, 0.71484657055291564709, 0.63088076792985890788,
        -0.027983769416859854211, -0.18703481171909308408, 0.030841381835560763627,
        0.032883011666885199735, -0.010597401785069032105,
    ]),
}
_ALIASES = {"db1": "haar"}

FAMILIES = ("haar", "db2", "db4")


@dataclass(frozen=True)
class WaveletSpec:
    family: str = "db2"
    levels: int = 1
    boundary: str = "periodization"

    def __post_init__(self):
        object.__setattr__(self, "family", _canonical(self.family))
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.boundary != "periodization":
            raise ValueError(f"unsupported boundary mode {self.boundary!r}")


@dataclass
class SubbandSet:
    ll: Tensor
    lh: Tensor
    hl: Tensor
    hh: Tensor

    def __post_init__(self):
        shapes = {t.shape for t in (self.ll, self.lh, self.hl, self.hh)}
        if len(shapes) != 1:
            raise ValueError(f"subband shapes differ: {sorted(shapes)}")

    def bands(self) -> tuple[Tensor, Tensor, Tensor, Tensor]:
        return self.ll, self.lh, self.hl, self.hh

    def energy(self) -> float:
        return float(sum(np.sum(t.data ** 2) for t in self.bands()))


def _canonical(family: str) -> str:
    key = family.lower()
    key = _ALIASES.get(key, key)
    if key not in _LOWPASS:
        raise ValueError(f"unknown wavelet family {family!r}; choose from {FAMILIES}")
    return key


def make_filters(family: str) -> tuple[np.ndarray, np.ndarray]:
    """Return the analysis (low-pass, high-pass) pair for ``family``."""
    h = _LOWPASS[_canonical(family)].copy()
    length = h.size
    g = np.array([(-1) ** k * h[length - 1 - k] for k in range(length)])
    return h, g


def _analysis(x: np.ndarray, h: np.ndarray, g: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    n = x.shape[axis]
    base = 2 * np.arange(n // 2)
    lo = hi = 0.0
    for k in range(h.size):
        taken = np.take(x, (base + k) % n, axis=axis)
        lo = lo + h[k] * taken
        hi = hi + g[k] * taken
    return lo, hi


def _synthesis(lo: np.ndarray, hi: np.ndarray, h: np.ndarray, g: np.ndarray, axis: int) -> np.ndarray:
    half = lo.shape[axis]
    n = 2 * half
    shape = list(lo.shape)
    shape[axis] = n
    out = np.zeros(shape, dtype=np.result_type(lo, hi))
    base = 2 * np.arange(half)
    moved = np.moveaxis(out, axis, -1)
    lo_m, hi_m = np.moveaxis(lo, axis, -1), np.moveaxis(hi, axis, -1)
    for k in range(h.size):
        # indices within one tap are distinct mod n, so fancy += does not drop updates
        moved[..., (base + k) % n] += h[k] * lo_m + g[k] * hi_m
    return out


def _dwt_array(x: np.ndarray, h: np.ndarray, g: np.ndarray) -> np.ndarray:
    lo_w, hi_w = _analysis(x, h, g, axis=-1)
    ll, lh = _analysis(lo_w, h, g, axis=-2)
    hl, hh = _analysis(hi_w, h, g, axis=-2)
    return np.stack([ll, lh, hl, hh], axis=1)


def _idwt_array(s: np.ndarray, h: np.ndarray, g: np.ndarray) -> np.ndarray:
    ll, lh, hl, hh = s[:, 0], s[:, 1], s[:, 2], s[:, 3]
    lo_w = _synthesis(ll, lh, h, g, axis=-2)
    hi_w = _synthesis(hl, hh, h, g, axis=-2)
    return _synthesis(lo_w, hi_w, h, g, axis=-1)


def _check_even(shape, what: str) -> None:
    h, w = shape[-2:]
    if h % 2 or w % 2:
        raise ValueError(f"{what} requires even spatial extents, got {h}x{w}")


def dwt2d_stacked(x: Tensor, family: str = "db2") -> Tensor:
    """One analysis level of ``x[N,C,H,W]`` -> ``[N,4,C,H/2,W/2]`` in (LL, LH, HL, HH) order."""
    if x.ndim != 4:
        raise ValueError("dwt2d expects a [N,C,H,W] tensor")
    _check_even(x.shape, "dwt2d")
    h, g = (f.astype(x.dtype) for f in make_filters(family))
    out = _dwt_array(x.data, h, g)
    return _record(out, (x,), lambda gr: (_idwt_array(gr, h, g),), "dwt2d")


def idwt2d_stacked(s: Tensor, family: str = "db2") -> Tensor:
    """Exact synthesis of ``[N,4,C,h,w]`` stacked subbands -> ``[N,C,2h,2w]``."""
    if s.ndim != 5 or s.shape[1] != 4:
        raise ValueError("idwt2d expects stacked subbands of shape [N,4,C,h,w]")
    h, g = (f.astype(s.dtype) for f in make_filters(family))
    out = _idwt_array(s.data, h, g)
    return _record(out, (s,), lambda gr: (_dwt_array(gr, h, g),), "idwt2d")


def dwt2d(x: Tensor, spec: WaveletSpec | str = "db2") -> SubbandSet:
    family = spec.family if isinstance(spec, WaveletSpec) else spec
    s = dwt2d_stacked(x, family)
    return SubbandSet(*(getitem(s, (slice(None), i)) for i in range(4)))


def idwt2d(bands: SubbandSet, spec: WaveletSpec | str = "db2") -> Tensor:
    family = spec.family if isinstance(spec, WaveletSpec) else spec
    n, c, hh, ww = bands.ll.shape
    stacked = concat([b.reshape(n, 1, c, hh, ww) for b in bands.bands()], axis=1)
    return idwt2d_stacked(stacked, family)


def dwt2d_multilevel(x: Tensor, spec: WaveletSpec) -> list[SubbandSet]:
    """Recursive decomposition of the LL band, finest level first.

    Only the last entry's ``ll`` is a coefficient set; earlier ``ll`` fields
    hold the intermediate approximations that were decomposed further.
    """
    levels = []
    current = x
    for level in range(spec.levels):
        h, w = current.shape[-2:]
        if h % 2 or w % 2:
            raise ValueError(f"odd extent {h}x{w} at decomposition level {level + 1}")
        bands = dwt2d(current, spec)
        levels.append(bands)
        current = bands.ll
    return levels


def idwt2d_multilevel(levels: list[SubbandSet], spec: WaveletSpec) -> Tensor:
    current = levels[-1].ll
    for bands in reversed(levels):
        current = idwt2d(SubbandSet(current, bands.lh, bands.hl, bands.hh), spec)
    return current
