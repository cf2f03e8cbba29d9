"""AdamW, the one-cycle learning-rate schedule and global-norm clipping."""

from __future__ import annotations

import math

import numpy as np


def one_cycle_lr(step: int, total: int, warmup: int, max_lr: float) -> float:
    """Linear warmup from 0 to ``max_lr`` over ``warmup`` steps, then cosine decay to 0 at ``total``."""
    if max_lr < 0:
        raise ValueError(f"negative learning rate {max_lr}")
    if step < warmup:
        return max_lr * step / warmup
    span = max(total - warmup, 1)
    progress = min(max((step - warmup) / span, 0.0), 1.0)
    return 0.5 * max_lr * (1.0 + math.cos(math.pi * progress))


def global_norm(grads) -> float:
    return math.sqrt(sum(float(np.vdot(g, g)) for g in grads))


def clip_gradients(grads: list, max_norm: float) -> list:
    """Rescale so the global L2 norm is at most ``max_norm``."""
    if max_norm <= 0:
        raise ValueError(f"max_norm must be positive, got {max_norm}")
    norm = global_norm(grads)
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    return [g * scale for g in grads]


class AdamW:
    """Adam with decoupled weight decay, in place on a list of tensors."""

    def __init__(self, tensors, beta1=0.9, beta2=0.999, eps=1e-8):
        self.tensors = list(tensors)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(t.value) for t in self.tensors]
        self.v = [np.zeros_like(t.value) for t in self.tensors]
        self.t = 0

    def step(self, grads, lr: float, weight_decay: float = 0.0) -> None:
        if lr < 0:
            raise ValueError(f"negative learning rate {lr}")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for t, g, m, v in zip(self.tensors, grads, self.m, self.v):
            if weight_decay:
                t.value *= 1.0 - lr * weight_decay
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            t.value -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state(self) -> dict:
        return {"t": self.t, "m": self.m, "v": self.v}

    def load_state(self, state: dict) -> None:
        self.t = int(state["t"])
        self.m = [np.array(x, dtype=np.float64) for x in state["m"]]
        self.v = [np.array(x, dtype=np.float64) for x in state["v"]]


def adamw_step(opt: AdamW, grads, lr: float, weight_decay: float) -> None:
    opt.step(grads, lr, weight_decay)
