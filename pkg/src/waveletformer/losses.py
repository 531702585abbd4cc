"""Training objective: L1 + (1 - MS-SSIM) + perceptual distance, combined linearly."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import functional as F
from .module import Conv2d, Module
from .tensor import Tensor, abs_, as_tensor, clamp_min, no_grad, power

SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
GAUSS_SIZE = 11
GAUSS_SIGMA = 1.5
MS_SSIM_WEIGHTS = np.array([0.0448, 0.2856, 0.3001, 0.2363, 0.1333])
_TERM_FLOOR = 1e-8


@dataclass(frozen=True)
class LossWeights:
    w_l1: float = 1.0
    w_msssim: float = 0.4
    w_perc: float = 0.01

    def __post_init__(self):
        ws = (self.w_l1, self.w_msssim, self.w_perc)
        if min(ws) < 0 or max(ws) <= 0:
            raise ValueError("loss weights must be non-negative with at least one positive")


def _same_shape(a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def gaussian_taps(size: int = GAUSS_SIZE, sigma: float = GAUSS_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def l1_loss(pred, target) -> Tensor:
    pred, target = as_tensor(pred), as_tensor(target)
    _same_shape(pred, target)
    return abs_(pred - target).mean()


def ssim_components(x: Tensor, y: Tensor, taps: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
    """Local luminance and contrast-structure maps over ``[N,C,H,W]`` (valid Gaussian filtering)."""
    taps = gaussian_taps() if taps is None else taps
    blur = lambda t: F.separable_filter(t, taps)  # noqa: E731
    mx, my = blur(x), blur(y)
    mx2, my2, mxy = mx * mx, my * my, mx * my
    sx = blur(x * x) - mx2
    sy = blur(y * y) - my2
    sxy = blur(x * y) - mxy
    lum = (2.0 * mxy + SSIM_C1) / (mx2 + my2 + SSIM_C1)
    cs = (2.0 * sxy + SSIM_C2) / (sx + sy + SSIM_C2)
    return lum, cs


def ssim_map(x: Tensor, y: Tensor) -> Tensor:
    lum, cs = ssim_components(x, y)
    return lum * cs


def max_scales(h: int, w: int, window: int = GAUSS_SIZE, limit: int = 5) -> int:
    """Largest scale count with ``min(h, w) >= 2**(scales-1) * window``."""
    s = 0
    while s < limit and min(h, w) >= 2 ** s * window:
        s += 1
    return s


def ms_ssim(pred, target, scales: int = 5) -> Tensor:
    """Multi-scale SSIM with the standard scale weights, truncated to ``scales`` and renormalised.

    Contrast-structure terms enter at every scale and luminance only at the
    coarsest. Per-scale means are floored at ``1e-8`` before the fractional
    power so uncorrelated inputs give a finite (zero) gradient there.
    """
    pred, target = as_tensor(pred), as_tensor(target)
    _same_shape(pred, target)
    if not 1 <= scales <= 5:
        raise ValueError("scales must be between 1 and 5")
    h, w = pred.shape[2:]
    if min(h, w) < 2 ** (scales - 1) * GAUSS_SIZE:
        raise ValueError(f"image {h}x{w} too small for {scales} scales (needs {2 ** (scales - 1) * GAUSS_SIZE})")
    weights = MS_SSIM_WEIGHTS[:scales] / MS_SSIM_WEIGHTS[:scales].sum()
    x, y = pred, target
    result = None
    for j in range(scales):
        lum, cs = ssim_components(x, y)
        term = cs.mean() if j < scales - 1 else (lum * cs).mean()
        factor = power(clamp_min(term, _TERM_FLOOR), float(weights[j]))
        result = factor if result is None else result * factor
        if j < scales - 1:
            x, y = F.avg_pool2(x), F.avg_pool2(y)
    return result


def ms_ssim_loss(pred, target, scales: int | None = None) -> Tensor:
    pred = as_tensor(pred)
    scales = max_scales(*pred.shape[2:]) if scales is None else scales
    return 1.0 - ms_ssim(pred, target, scales)


class FeatureExtractor(Module):
    """Frozen, seed-initialised stack of three stride-2 3x3 convolutions with ReLU."""

    def __init__(self, seed: int = 1234, widths: tuple[int, ...] = (8, 16, 32), dtype=np.float64):
        rng = np.random.default_rng(seed)
        chans = (3,) + tuple(widths)
        self.layers = [Conv2d(chans[i], chans[i + 1], 3, stride=2, padding=1, rng=rng, dtype=dtype)
                       for i in range(len(widths))]
        for p in self.parameters().values():
            p.requires_grad = False

    def forward(self, x: Tensor) -> list[Tensor]:
        feats = []
        for layer in self.layers:
            x = F.relu(layer(x))
            feats.append(x)
        return feats


_EXTRACTORS: dict[tuple, FeatureExtractor] = {}


def default_extractor(dtype=np.float64) -> FeatureExtractor:
    key = (np.dtype(dtype).str,)
    if key not in _EXTRACTORS:
        _EXTRACTORS[key] = FeatureExtractor(dtype=dtype)
    return _EXTRACTORS[key]


def perceptual_loss(pred, target, extractor: FeatureExtractor | None = None,
                    depths: tuple[int, ...] = (2, 3)) -> Tensor:
    """Sum over ``depths`` of the mean absolute feature difference; target features carry no gradient."""
    pred, target = as_tensor(pred), as_tensor(target)
    _same_shape(pred, target)
    extractor = extractor or default_extractor(pred.dtype)
    fp = extractor(pred)
    with no_grad():
        ft = extractor(target.detach())
    total = None
    for d in depths:
        term = abs_(fp[d - 1] - ft[d - 1]).mean()
        total = term if total is None else total + term
    return total


def loss_components(pred, target, weights: LossWeights = LossWeights(),
                    extractor: FeatureExtractor | None = None) -> dict[str, Tensor]:
    pred, target = as_tensor(pred), as_tensor(target)
    parts: dict[str, Tensor] = {}
    if weights.w_l1:
        parts["l1"] = l1_loss(pred, target)
    if weights.w_msssim:
        parts["msssim"] = ms_ssim_loss(pred, target)
    if weights.w_perc:
        parts["perc"] = perceptual_loss(pred, target, extractor)
    return parts


def total_loss(pred, target, weights: LossWeights = LossWeights(),
               extractor: FeatureExtractor | None = None, parts: dict | None = None) -> Tensor:
    """``w_l1*L1 + w_msssim*(1 - MS-SSIM) + w_perc*Lperc``.

    MS-SSIM uses as many of the five standard scales as the image extent
    allows. Components with zero weight are not evaluated.
    """
    parts = loss_components(pred, target, weights, extractor) if parts is None else parts
    coef = {"l1": weights.w_l1, "msssim": weights.w_msssim, "perc": weights.w_perc}
    total = None
    for name, value in parts.items():
        term = value * coef[name]
        total = term if total is None else total + term
    return total
