"""Numerical self-checks behind ``wfnet verify``.

Each suite returns a list of :class:`Check` results with the worst error seen
and the tolerance it was held to.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import functional as F
from .attention import AttentionConfig, WindowAttention, mhca, window_mhsa
from .blocks import ASPP, BlockConfig, FeatureAggregation, IWaveletFormerBlock, WaveletFormerBlock
from .data import T_MIN, HazeParams, ImagePair, apply_asm, invert_asm, make_pair, synth_clean, synth_depth
from .gradcheck import grad_check
from .losses import SSIM_C1, FeatureExtractor, l1_loss, ms_ssim, ms_ssim_loss, perceptual_loss
from .metrics import entropy, psnr, ssim
from .network import ABLATIONS, NetworkConfig, build
from .optim import TrainConfig, TrainState, fit
from .tensor import Tensor, no_grad
from .wavelet import (FAMILIES, WaveletSpec, dwt2d_multilevel, dwt2d_stacked, idwt2d_multilevel,
                      idwt2d_stacked, make_filters)

SUITES = ("wavelet", "grad", "metrics", "asm")
EXTRA_SUITES = ("ablations", "toy")
GRAD_SEEDS = 5


@dataclass
class Check:
    suite: str
    name: str
    max_error: float
    tol: float
    inclusive: bool = False
    detail: str = ""

    @property
    def passed(self) -> bool:
        return bool(self.max_error <= self.tol if self.inclusive else self.max_error < self.tol)

    def line(self) -> str:
        text = f"{'PASS' if self.passed else 'FAIL'} {self.suite}/{self.name} max_err={self.max_error:.3e} tol={self.tol:.0e}"
        return f"{text} ({self.detail})" if self.detail else text


# -- wavelet ----------------------------------------------------------------
def reconstruction_error(family: str, levels: int, count: int = 20, shape=(3, 64, 64), seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    spec = WaveletSpec(family, levels)
    worst = 0.0
    for _ in range(count):
        x = rng.standard_normal((1,) + tuple(shape))
        y = idwt2d_multilevel(dwt2d_multilevel(Tensor(x), spec), spec).data
        worst = max(worst, float(np.abs(y - x).max()))
    return worst


def orthonormality_errors(family: str) -> dict[str, float]:
    h, g = make_filters(family)
    shifts = [float(abs(np.dot(h[2 * k:], h[: len(h) - 2 * k]))) for k in range(1, len(h) // 2)]
    return {
        "sum": abs(h.sum() - math.sqrt(2.0)),
        "energy": abs(np.dot(h, h) - 1.0),
        "shift": max(shifts, default=0.0),
        "highpass_sum": abs(g.sum()),
        "cross": abs(float(np.dot(h, g))),
    }


def wavelet_suite() -> list[Check]:
    checks = []
    for fam in FAMILIES:
        for lev in (1, 2, 3):
            checks.append(Check("wavelet", f"reconstruct/{fam}/L{lev}", reconstruction_error(fam, lev), 1e-10))
        for key, err in orthonormality_errors(fam).items():
            checks.append(Check("wavelet", f"orthonormal/{fam}/{key}", err, 1e-12))
    return checks


# -- gradients --------------------------------------------------------------
def _t(rng, *shape, scale=1.0):
    return Tensor(rng.standard_normal(shape) * scale)


def _scramble(module, rng, scale=0.3):
    """Redraw every parameter at O(scale) so no path is degenerate at init (flat softmax, zero tails)."""
    for p in module.parameters().values():
        p.data = rng.standard_normal(p.shape) * scale
    return module


def _block_case(kind: str, rng):
    if kind == "waveletformer":
        blk = WaveletFormerBlock(BlockConfig(4, 8), rng)
        x = _t(rng, 1, 4, 8, 8)
    elif kind == "iwaveletformer":
        blk = IWaveletFormerBlock(BlockConfig(8, 4), rng)
        x = _t(rng, 1, 8, 4, 4)
    elif kind == "fam":
        blk = FeatureAggregation(4, 2, 4, rng)
        a, b = _t(rng, 1, 4, 4, 4), _t(rng, 1, 4, 4, 4)
        _scramble(blk, rng)
        ps = list(blk.parameters().values())
        return (lambda a, b, *p: blk(a, b)), [a, b] + ps[:2]
    else:
        blk = ASPP(4, 4, rng)
        x = _t(rng, 1, 4, 8, 8)
    _scramble(blk, rng)
    params = [p for name, p in blk.parameters().items() if name.endswith("weight")][:3]
    return (lambda x, *p: blk(x)), [x] + params


def _network_case(rng):
    # the tiny configuration (S=2, C0=8, window 4); a non-zero tail makes every layer matter
    model = build(NetworkConfig(stages=2, base_channels=8, window=4), seed=int(rng.integers(1 << 30)))
    model.tail.weight.data = rng.standard_normal(model.tail.weight.shape) * 0.1
    x = Tensor(rng.uniform(0.0, 1.0, (1, 3, 16, 16)))
    params = [model.head.weight, model.encoders[1].body.attn.q.weight, model.aspp.reduce.weight,
              model.fams[0].attn.k.weight, model.decoders[0].proj.weight, model.tail.weight]
    return (lambda x, *p: model(x)), [x] + params


def _loss_case(kind: str, rng):
    target = rng.uniform(0.2, 0.8, (1, 3, 24, 24))
    # keep |pred - target| >= 0.01 so no difference quotient straddles the L1 kink
    gap = rng.choice([-1.0, 1.0], target.shape) * (0.01 + np.abs(rng.standard_normal(target.shape)) * 0.05)
    pred = Tensor(target + gap)
    tgt = Tensor(target)
    if kind == "l1":
        return (lambda p: l1_loss(p, tgt)), [pred]
    if kind == "msssim":
        return (lambda p: ms_ssim_loss(p, tgt)), [pred]
    ext = FeatureExtractor()
    return (lambda p: perceptual_loss(p, tgt, ext)), [pred]


def _attention(rng, channels=8, heads=2, window=4):
    return _scramble(WindowAttention(AttentionConfig.for_channels(channels, heads, window), rng), rng)


GRAD_CASES: dict[str, Callable] = {
    "conv2d": lambda rng, s: (
        (lambda x, w, b: F.conv2d(x, w, b, stride=1 + s % 2, padding=1 + s % 2, dilation=1 + s % 2)),
        [_t(rng, 1, 2, 7, 7), _t(rng, 3, 2, 3, 3), _t(rng, 3)]),
    "softmax": lambda rng, s: ((lambda x: F.softmax(x, axis=-1)), [_t(rng, 2, 3, 7, scale=2.0)]),
    "layer_norm": lambda rng, s: ((lambda x, g, b: F.layer_norm(x, g, b, axis=1)),
                                  [_t(rng, 2, 5, 3, 3), _t(rng, 5), _t(rng, 5)]),
    "dwt2d": lambda rng, s: ((lambda x: dwt2d_stacked(x, FAMILIES[s % 3])), [_t(rng, 1, 2, 8, 8)]),
    "idwt2d": lambda rng, s: ((lambda x: idwt2d_stacked(x, FAMILIES[s % 3])), [_t(rng, 1, 4, 2, 4, 4)]),
    "window_mhsa": lambda rng, s: (lambda a: ((lambda t: window_mhsa(t, a)), [_t(rng, 2, 16, 8)]))(_attention(rng)),
    "mhca": lambda rng, s: (lambda a: ((lambda q, kv: mhca(q, kv, a)),
                                       [_t(rng, 1, 8, 4, 8), _t(rng, 1, 8, 4, 8)]))(_attention(rng)),
    "waveletformer": lambda rng, s: _block_case("waveletformer", rng),
    "iwaveletformer": lambda rng, s: _block_case("iwaveletformer", rng),
    "fam": lambda rng, s: _block_case("fam", rng),
    "aspp": lambda rng, s: _block_case("aspp", rng),
    "network": lambda rng, s: _network_case(rng),
    "l1_loss": lambda rng, s: _loss_case("l1", rng),
    "msssim_loss": lambda rng, s: _loss_case("msssim", rng),
    "perceptual_loss": lambda rng, s: _loss_case("perceptual", rng),
}


def grad_error(name: str, seed: int, h: float = 1e-5, max_elements: int = 24) -> float:
    rng = np.random.default_rng(1000 + seed)
    fn, inputs = GRAD_CASES[name](rng, seed)
    return grad_check(fn, inputs, h=h, seed=seed, max_elements=max_elements).max_rel_error


def grad_suite(seeds: int = GRAD_SEEDS) -> list[Check]:
    return [Check("grad", name, max(grad_error(name, s) for s in range(seeds)), 1e-4) for name in GRAD_CASES]


# -- metrics ----------------------------------------------------------------
def metric_closed_forms(seed: int = 0) -> dict[str, tuple[float, float]]:
    """``{name: (abs error, tolerance)}`` for the closed-form metric cases."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 0.9, (3, 32, 32))
    zeros, ones = np.zeros((3, 16, 16)), np.ones((3, 16, 16))
    levels = np.broadcast_to(np.arange(256, dtype=np.float64).reshape(16, 16) / 255.0, (3, 16, 16))
    y = rng.uniform(0.0, 1.0, (1, 3, 176, 176))
    return {
        "psnr_offset": (abs(psnr(x + 0.1, x) - 20.0), 1e-9),
        "ssim_identity": (abs(ssim(x, x) - 1.0), 1e-9),
        "ssim_constant": (abs(ssim(zeros, ones) - SSIM_C1 / (1.0 + SSIM_C1)), 1e-9),
        "entropy_uniform": (abs(entropy(levels) - 8.0), 1e-12),
        "msssim_identity": (abs(ms_ssim(Tensor(y), Tensor(y)).item() - 1.0), 1e-6),
    }


def metrics_suite() -> list[Check]:
    return [Check("metrics", k, err, tol) for k, (err, tol) in metric_closed_forms().items()]


# -- scattering model -------------------------------------------------------
def asm_roundtrip_error(seed: int, size=(32, 32)) -> float:
    rng = np.random.default_rng(seed)
    h, w = size
    clean = rng.uniform(0.0, 1.0, (3, h, w))
    kind = ("ramp", "radial", "blocks")[seed % 3]
    params = HazeParams(rng.uniform(0.6, 1.0, 3), float(rng.uniform(0.0, 4.0)), synth_depth(h, w, kind, seed))
    hazy = apply_asm(clean, params)
    rec = invert_asm(hazy, params, strict=False)
    ok = params.transmission() >= T_MIN
    return float(np.abs(rec - clean)[:, ok].max(initial=0.0))


def asm_suite(seeds: int = 10) -> list[Check]:
    return [Check("asm", "roundtrip", max(asm_roundtrip_error(s) for s in range(seeds)), 1e-10)]


# -- training ---------------------------------------------------------------
TOY_NETWORK = NetworkConfig(stages=2, base_channels=8, window=4)
TOY_STEPS = 2000
TOY_TARGET_DB = 30.0


def toy_pair(size: int = 64, scene_seed: int = 0) -> ImagePair:
    """One synthetic pair: ramp depth, beta = 1, grey atmospheric light 0.8."""
    params = HazeParams(0.8, 1.0, synth_depth(size, size, "ramp"))
    return make_pair(synth_clean(size, size, scene_seed), params, "toy")


def toy_fit(steps: int = TOY_STEPS, seed: int = 0, cfg: NetworkConfig = TOY_NETWORK,
            pair: ImagePair | None = None) -> tuple[TrainState, float]:
    """Overfit ``cfg`` on :func:`toy_pair`; returns the state and the final full-image PSNR.

    Augmentation is off, so every step sees the same 64x64 pair.
    """
    pair = toy_pair() if pair is None else pair
    model = build(cfg, seed)
    state = fit(model, [pair], TrainConfig(steps=steps, crop=pair.hazy.shape[-1], seed=seed, augment=False))
    with no_grad():
        out = model(pair.hazy[None]).data[0]
    return state, psnr(out, pair.clean)


def toy_suite(steps: int = TOY_STEPS) -> list[Check]:
    _, db = toy_fit(steps)
    # the error is the shortfall in dB below the target, zero once it is reached
    return [Check("toy", "overfit", max(TOY_TARGET_DB - db, 0.0), 0.0, inclusive=True,
                  detail=f"{db:.2f} dB after {steps} steps, target {TOY_TARGET_DB:g} dB")]


def ablation_suite(steps: int = 10) -> list[Check]:
    """Every ablation variant trains ``steps`` steps with finite losses and weights."""
    pair = toy_pair(32)
    checks = []
    for variant in ABLATIONS:
        model = build(TOY_NETWORK.ablate(variant), 0)
        state = fit(model, [pair], TrainConfig(steps=steps, crop=32, seed=0, augment=False))
        finite = all(math.isfinite(r["loss"]) for r in state.history)
        finite = finite and all(np.isfinite(p.data).all() for p in model.parameters().values())
        h = state.history
        checks.append(Check("ablations", variant, 0.0 if finite else math.inf, 0.0, inclusive=True,
                            detail=f"loss {h[0]['loss']:.4f} -> {h[-1]['loss']:.4f} over {steps} steps"))
    return checks


def run_suite(name: str) -> list[Check]:
    """Run one suite by name. ``all`` covers :data:`SUITES`; the slower extras run only by name."""
    runners = {"wavelet": wavelet_suite, "grad": grad_suite, "metrics": metrics_suite, "asm": asm_suite,
               "ablations": ablation_suite, "toy": toy_suite}
    if name == "all":
        return [c for s in SUITES for c in runners[s]()]
    if name not in runners:
        raise ValueError(f"unknown suite {name!r}; choose from {SUITES + EXTRA_SUITES + ('all',)}")
    return runners[name]()
