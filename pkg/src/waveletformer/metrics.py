"""PSNR, SSIM and Shannon entropy for restored images."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .losses import GAUSS_SIZE, ssim_map
from .tensor import Tensor, no_grad


def _arr(x) -> np.ndarray:
    return np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)


def psnr(pred, target, max_val: float = 1.0) -> float:
    """PSNR in dB over all channels jointly; ``math.inf`` when the images are identical."""
    p, t = _arr(pred), _arr(target)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    mse = float(np.mean((p - t) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(max_val ** 2 / mse)


def to_gray(img: np.ndarray) -> np.ndarray:
    """Unweighted channel mean of ``[C,H,W]`` (or ``[N,C,H,W]``)."""
    img = _arr(img)
    return img.mean(axis=-3)


def ssim(pred, target) -> float:
    """Mean SSIM map of the grayscale images (11x11 Gaussian, sigma 1.5, unpadded)."""
    p, t = _arr(pred), _arr(target)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    gp, gt = to_gray(p), to_gray(t)
    h, w = gp.shape[-2:]
    if h < GAUSS_SIZE or w < GAUSS_SIZE:
        raise ValueError(f"image {h}x{w} is smaller than the {GAUSS_SIZE}x{GAUSS_SIZE} window")
    gp = gp.reshape(-1, 1, h, w)
    gt = gt.reshape(-1, 1, h, w)
    with no_grad():
        return float(ssim_map(Tensor(gp), Tensor(gt)).data.mean())


def entropy(img) -> float:
    """Shannon entropy (bits) of the 256-level grayscale histogram."""
    gray = to_gray(img)
    q = np.clip(np.floor(gray * 255.0 + 0.5), 0, 255).astype(np.int64)
    counts = np.bincount(q.ravel(), minlength=256)
    p = counts[counts > 0] / q.size
    return float(-(p * np.log2(p)).sum()) + 0.0


@dataclass
class MetricsReport:
    ids: list[str] = field(default_factory=list)
    psnr: list[float] = field(default_factory=list)
    ssim: list[float] = field(default_factory=list)
    entropy: list[float] = field(default_factory=list)

    def add(self, id: str, pred, target) -> None:
        self.ids.append(id)
        self.psnr.append(psnr(pred, target))
        self.ssim.append(ssim(pred, target))
        self.entropy.append(entropy(pred))

    @property
    def count(self) -> int:
        return len(self.ids)

    def mean(self) -> tuple[float, float, float]:
        if not self.ids:
            raise ValueError("empty report")
        return (float(np.mean(self.psnr)), float(np.mean(self.ssim)), float(np.mean(self.entropy)))

    def lines(self) -> list[str]:
        rows = [f"{i} {_fmt(p)} {_fmt(s)} {_fmt(e)}" for i, p, s, e in zip(self.ids, self.psnr, self.ssim, self.entropy)]
        rows.append("MEAN " + " ".join(_fmt(v) for v in self.mean()))
        return rows

    def write(self, path) -> None:
        Path(path).write_text("\n".join(self.lines()) + "\n")

    @classmethod
    def read(cls, path) -> "MetricsReport":
        rep = cls()
        for line in Path(path).read_text().splitlines():
            parts = line.split()
            if not parts or parts[0] == "MEAN":
                continue
            rep.ids.append(parts[0])
            rep.psnr.append(float(parts[1]))
            rep.ssim.append(float(parts[2]))
            rep.entropy.append(float(parts[3]))
        return rep


def _fmt(v: float) -> str:
    return "inf" if math.isinf(v) else f"{v:.6f}"
