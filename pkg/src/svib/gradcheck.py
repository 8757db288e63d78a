"""Central finite-difference checks for the autodiff engine."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad


def relative_error(analytic, numeric, floor=1e-6):
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``; the floor absorbs rounding on tiny entries."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def numeric_gradient(fn, tensor, step=1e-5, index=None):
    """Central differences of the scalar ``fn()`` with respect to ``tensor.data``."""
    flat = tensor.data.reshape(-1)
    idx = range(flat.size) if index is None else index
    out = np.zeros(flat.size)
    for i in idx:
        orig = flat[i]
        flat[i] = orig + step
        up = float(fn().data)
        flat[i] = orig - step
        down = float(fn().data)
        flat[i] = orig
        out[i] = (up - down) / (2.0 * step)
    return out.reshape(tensor.shape)


def check_gradients(fn, tensors, step=1e-5, max_entries=None, rng=None):
    """Max relative error between backprop and central differences.

    ``fn`` builds a fresh scalar tensor from ``tensors`` each call. With
    ``max_entries`` only a random subset of each tensor is probed.
    """
    tensors = list(tensors.values()) if isinstance(tensors, dict) else list(tensors)
    ad.zero_grad(tensors)
    ad.backward(fn())
    worst = 0.0
    for t in tensors:
        analytic = np.zeros(t.shape) if t.grad is None else t.grad.copy()
        index = None
        if max_entries is not None and t.size > max_entries:
            index = (rng or np.random.default_rng(0)).choice(t.size, size=max_entries, replace=False)
        numeric = numeric_gradient(fn, t, step, index)
        if index is None:
            err = relative_error(analytic, numeric)
        else:
            err = relative_error(analytic.reshape(-1)[index], numeric.reshape(-1)[index])
        worst = max(worst, float(err.max(initial=0.0)))
    return worst
