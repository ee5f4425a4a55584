"""Adam with bias correction and stepped exponential learning-rate decay."""

from __future__ import annotations

import math

import numpy as np

from .errors import ContractError, NumericError
from .tensor import Tensor


class AdamState:
    """Per-parameter moment buffers plus the decay schedule.

    `step` counts completed updates; the learning rate used by update k
    (0-based) is lr * decay**(k // decay_interval).
    """

    def __init__(self, params: dict[str, Tensor], lr=0.0002, beta1=0.9, beta2=0.999,
                 eps=1e-8, decay=0.9, decay_interval=10000):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.decay = decay
        self.decay_interval = decay_interval
        self.step = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}

    def effective_lr(self, step=None):
        s = self.step if step is None else step
        return self.lr * self.decay ** (s // self.decay_interval)


def adam_step(params: dict[str, Tensor], state: AdamState) -> None:
    """Apply one bias-corrected Adam update in place; consumes .grad buffers."""
    for name, p in params.items():
        if p.grad is None:
            raise ContractError(f"missing gradient for parameter {name}")
    lr = state.effective_lr()
    t = state.step + 1
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = p.grad
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        update = lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.data = p.data - update.astype(p.data.dtype)
        if not np.all(np.isfinite(p.data)):
            raise NumericError(f"non-finite parameter after update: {name}")
    state.step += 1


def clip_gradients(params: dict[str, Tensor], max_norm: float) -> tuple[float, bool]:
    """Scale all gradients so the global L2 norm is at most max_norm.

    Returns (pre-clip norm, whether clipping fired).
    """
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float(np.sum(p.grad.astype(np.float64) ** 2))
    norm = math.sqrt(total)
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad = p.grad * scale
        return norm, True
    return norm, False
