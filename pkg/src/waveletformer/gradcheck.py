"""Central finite-difference check of reverse-mode gradients."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_input: list[float] = field(default_factory=list)
    tol: float = 1e-4
    checked: int = 0

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol

    def __str__(self) -> str:
        status = "ok" if self.passed else "FAIL"
        return f"max rel. error {self.max_rel_error:.3e} over {self.checked} elements [{status}]"


def grad_check(fn: Callable[..., Tensor], inputs: Sequence[Tensor], h: float = 1e-5,
               tol: float = 1e-4, seed: int = 0, max_elements: int | None = None,
               floor: float = 1e-6) -> GradCheckReport:
    """Compare analytic gradients of ``fn`` with central differences.

    ``fn`` maps the given tensors to one output tensor, which is reduced to a
    scalar by a fixed random projection drawn from ``seed``. Every element of
    every input is perturbed (or a random subset of ``max_elements`` per input).

    The relative error of one element is ``|a - n| / max(|a|, |n|, s)`` with
    ``s = max(floor * (1 + max|a|), r / tol)``. ``r`` is the rounding error of
    the difference quotient: the larger of ``eps * sum|f_i p_i| / h`` and
    ``sigma / h``, where ``sigma`` is the evaluation noise of the projected
    objective measured by :func:`objective_noise`. Gradient components below
    what the quotient can resolve are thus held to an absolute error of ``r``
    instead of a relative one. Failures are reported, not raised.
    """
    rng = np.random.default_rng(seed)
    for t in inputs:
        if t.dtype != np.float64:
            raise TypeError("grad_check requires double precision inputs")
    flags = [t.requires_grad for t in inputs]
    for t in inputs:
        t.requires_grad = True
        t.grad = None

    out = fn(*inputs)
    proj = rng.standard_normal(out.shape)
    (out * Tensor(proj)).sum().backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]

    def objective() -> float:
        with no_grad():
            return float(np.sum(fn(*inputs).data * proj))

    sigma = objective_noise(objective, inputs, rng)
    roundoff = max(np.finfo(np.float64).eps * float(np.abs(out.data * proj).sum()), sigma) / h

    per_input = []
    total = 0
    for t, a in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_elements is not None and flat.size > max_elements:
            idx = rng.choice(flat.size, size=max_elements, replace=False)
        numeric = np.empty(idx.size)
        for j, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + h
            fp = objective()
            flat[i] = orig - h
            fm = objective()
            flat[i] = orig
            numeric[j] = (fp - fm) / (2.0 * h)
        av = a.reshape(-1)[idx]
        scale = max(floor * (1.0 + np.abs(a).max(initial=0.0)), roundoff / tol)
        denom = np.maximum(np.maximum(np.abs(av), np.abs(numeric)), scale)
        per_input.append(float(np.max(np.abs(av - numeric) / denom, initial=0.0)))
        total += idx.size

    for t, f in zip(inputs, flags):
        t.requires_grad = f
        t.grad = None
    return GradCheckReport(max(per_input, default=0.0), per_input, tol, total)


def objective_noise(objective: Callable[[], float], inputs: Sequence[Tensor],
                    rng: np.random.Generator, points: int = 16, order: int = 6,
                    spacing: float = 1e-9) -> float:
    """Rounding noise of ``objective`` near the current point of ``inputs``.

    The objective is sampled at ``points`` equally spaced offsets along one
    random direction. At this spacing the smooth part of its ``order``-th
    differences is far below one ulp, so they consist of rounding noise alone;
    for independent noise of level ``sigma`` each has variance
    ``C(2 order, order) * sigma**2``. Inputs are restored on return.
    """
    dirs = [rng.standard_normal(t.shape) for t in inputs]
    base = [t.data.copy() for t in inputs]
    vals = np.empty(points)
    try:
        for k in range(points):
            for t, b, d in zip(inputs, base, dirs):
                t.data[...] = b + (k * spacing) * d
            vals[k] = objective()
    finally:
        for t, b in zip(inputs, base):
            t.data[...] = b
    diffs = np.diff(vals, n=order)
    return float(np.sqrt(np.mean(diffs ** 2) / math.comb(2 * order, order)))
