"""Adam, cosine learning-rate annealing and the training loop."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import AugmentSpec, ImagePair, augment
from .losses import LossWeights, default_extractor, loss_components, total_loss
from .metrics import psnr
from .module import Module
from .tensor import NonFiniteError, Parameter


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScheduleSpec:
    lr0: float = 1e-4
    total_steps: int = 1

    def __post_init__(self):
        if self.lr0 < 0 or self.total_steps < 1:
            raise ValueError("lr0 must be non-negative and total_steps positive")


def cosine_lr(t: int, spec: ScheduleSpec) -> float:
    """``lr0/2 * (1 + cos(pi t / T))``; exact at both ends."""
    if not 0 <= t <= spec.total_steps:
        raise ValueError(f"step {t} outside [0, {spec.total_steps}]")
    if t == spec.total_steps:
        return 0.0
    return 0.5 * spec.lr0 * (1.0 + math.cos(math.pi * t / spec.total_steps))


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, Parameter], state: AdamState, lr: float,
              grads: dict[str, np.ndarray] | None = None) -> None:
    """Bias-corrected Adam update, in place on ``params`` and ``state``.

    Gradients default to each parameter's ``.grad``; parameters without one are skipped.
    """
    grads = {k: p.grad for k, p in params.items()} if grads is None else grads
    for name, g in grads.items():
        if g is not None and not np.isfinite(g).all():
            raise NonFiniteError(f"non-finite gradient for {name}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m = state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1.0 - b2) * (g * g)
        p.data = p.data - (lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype)


def clip_grad_norm(params: dict[str, Parameter], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``; returns the pre-clip norm."""
    grads = [p.grad for p in params.values() if p.grad is not None]
    norm = math.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads))
    if norm > max_norm > 0:
        scale = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad = p.grad * scale
    return norm


@dataclass
class TrainConfig:
    steps: int = 500
    batch: int = 1
    crop: int = 64
    seed: int = 0
    lr: float = 1e-4
    weights: LossWeights = field(default_factory=LossWeights)
    clip: float | None = 1.0
    augment: bool = True
    log_every: int = 1
    ckpt_every: int = 0
    out_dir: str | None = None


@dataclass
class TrainState:
    model: Module
    adam: AdamState
    schedule: ScheduleSpec
    seed: int
    step: int = 0
    history: list[dict] = field(default_factory=list)


def _batch(pairs: Sequence[ImagePair], cfg: TrainConfig, rng: np.random.Generator, dtype):
    spec = (AugmentSpec(cfg.crop) if cfg.augment
            else AugmentSpec(cfg.crop, rotations=(), flip_prob=0.0))
    idx = rng.integers(0, len(pairs), size=cfg.batch)
    items = [augment(pairs[i], spec, rng) for i in idx]
    x = np.stack([p.hazy for p in items]).astype(dtype)
    y = np.stack([p.clean for p in items]).astype(dtype)
    return x, y, ",".join(p.id or str(i) for p, i in zip(items, idx))


def format_record(rec: dict) -> str:
    keys = ("step", "pair", "lr", "loss", "l1", "msssim", "perc", "psnr")
    return " ".join(f"{k}={rec[k]:.10g}" if isinstance(rec.get(k), float) else f"{k}={rec.get(k, 'nan')}"
                    for k in keys)


def parse_record(line: str) -> dict:
    """Inverse of :func:`format_record`; numeric fields come back as numbers."""
    rec: dict = {}
    for item in line.split():
        key, _, val = item.partition("=")
        if key == "pair":
            rec[key] = val
        elif key == "step":
            rec[key] = int(val)
        else:
            rec[key] = float(val)
    return rec


def pair_progress(history: Sequence[dict]) -> dict[str, tuple[float, float]]:
    """First and last logged PSNR for every pair id seen in ``history``."""
    out: dict[str, tuple[float, float]] = {}
    for rec in history:
        first = out.get(rec["pair"], (rec["psnr"], rec["psnr"]))[0]
        out[rec["pair"]] = (first, rec["psnr"])
    return out


def fit(model: Module, dataset: Sequence[ImagePair], cfg: TrainConfig) -> TrainState:
    """Train ``model`` for ``cfg.steps`` Adam steps under a cosine schedule.

    Deterministic for a fixed seed. When ``cfg.out_dir`` is set, one record per
    logged step is appended to ``metrics.log`` and ``ckpt_<step>.wfn`` files are
    written every ``ckpt_every`` steps and at the end.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    if hasattr(model, "cfg"):
        model.cfg.check_extents(cfg.crop, cfg.crop)
    dtype = np.dtype(model.cfg.dtype) if hasattr(model, "cfg") else np.float64
    schedule = ScheduleSpec(cfg.lr, max(cfg.steps, 1))
    state = TrainState(model, AdamState(), schedule, cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    extractor = default_extractor(dtype)
    params = model.parameters()
    out_dir = Path(cfg.out_dir) if cfg.out_dir else None
    log = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        log = open(out_dir / "metrics.log", "w")
    try:
        for t in range(cfg.steps):
            lr = cosine_lr(t, schedule)
            x, y, ids = _batch(dataset, cfg, rng, dtype)
            model.zero_grad()
            try:
                pred = model(x)
                parts = loss_components(pred, y, cfg.weights, extractor)
                loss = total_loss(pred, y, cfg.weights, parts=parts)
                loss.backward()
                if cfg.clip:
                    clip_grad_norm(params, cfg.clip)
                adam_step(params, state.adam, lr)
            except NonFiniteError as exc:
                raise TrainingError(f"non-finite value at step {t} (lr={lr:.3g}): {exc}") from exc
            rec = {"step": t, "pair": ids, "lr": lr, "loss": loss.item(), "psnr": psnr(pred, y)}
            rec.update({k: v.item() for k, v in parts.items()})
            state.history.append(rec)
            state.step = t + 1
            if log is not None and (t % cfg.log_every == 0 or t == cfg.steps - 1):
                log.write(format_record(rec) + "\n")
                log.flush()
            if out_dir is not None and cfg.ckpt_every and (t + 1) % cfg.ckpt_every == 0:
                _save(model, out_dir / f"ckpt_{t + 1}.wfn")
        if out_dir is not None:
            _save(model, out_dir / f"ckpt_{cfg.steps}.wfn")
    finally:
        if log is not None:
            log.close()
    return state


def _save(model, path) -> None:
    from .checkpoint import save_checkpoint

    save_checkpoint(model, path)
