"""Gradient-ascent optimisers over dicts of parameter tensors.

Both optimisers *ascend*: they move parameters along the supplied
gradient. Pass ``-grad`` to minimise.
"""

from __future__ import annotations

import numpy as np


class SGD:
    def __init__(self, params, lr):
        self.params = params
        self.lr = lr

    def step(self, grads):
        for name, p in self.params.items():
            p.data = p.data + self.lr * grads[name]

    def state_arrays(self):
        return {}


class RMSProp:
    """RMSProp with the A2C-baseline defaults (decay 0.99, eps 1e-5)."""

    def __init__(self, params, lr, decay=0.99, eps=1e-5):
        self.params = params
        self.lr = lr
        self.decay = decay
        self.eps = eps
        self.sq = {name: np.zeros(p.shape) for name, p in params.items()}

    def step(self, grads):
        for name, p in self.params.items():
            g = grads[name]
            self.sq[name] = self.decay * self.sq[name] + (1.0 - self.decay) * g * g
            p.data = p.data + self.lr * g / (np.sqrt(self.sq[name]) + self.eps)

    def state_arrays(self):
        return dict(self.sq)


def make_optimizer(kind, params, lr):
    if kind == "rmsprop":
        return RMSProp(params, lr)
    if kind == "sgd":
        return SGD(params, lr)
    raise ValueError(f"unknown optimizer {kind!r}")


def global_norm(grads):
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_by_global_norm(grads, max_norm):
    norm = global_norm(grads)
    if max_norm is None or norm <= max_norm:
        return grads
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}
