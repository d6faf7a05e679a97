"""Central finite-difference gradient checks for the autodiff engine."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, backward


def numerical_grad(fn, inputs, index, eps=1e-5):
    """Central differences of scalar ``fn(*inputs)`` w.r.t. ``inputs[index]``."""
    x = inputs[index]
    grad = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    gflat = grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + eps
        fp = fn(*inputs).item()
        flat[k] = orig - eps
        fm = fn(*inputs).item()
        flat[k] = orig
        gflat[k] = (fp - fm) / (2.0 * eps)
    return grad


def max_relative_error(fn, arrays, eps=1e-5, floor=1e-6):
    """Largest relative error between analytic and numeric grads over all inputs.

    ``arrays`` are plain arrays; each becomes a leaf tensor requiring grad.
    Relative error is ``|a - n| / max(|a|, |n|, floor)``.
    """
    inputs = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
    for t in inputs:
        t.zero_grad()
    backward(fn(*inputs))
    worst = 0.0
    for i, t in enumerate(inputs):
        num = numerical_grad(fn, inputs, i, eps)
        denom = np.maximum(np.maximum(np.abs(t.grad), np.abs(num)), floor)
        worst = max(worst, float(np.max(np.abs(t.grad - num) / denom)))
    return worst


def check_params(loss_fn, params, eps=1e-5, floor=1e-6, max_entries=None, rng=None):
    """Finite-difference check of ``loss_fn()`` against existing parameter tensors.

    ``max_entries`` limits how many coordinates per parameter are probed
    (chosen with ``rng``); returns the worst relative error.
    """
    for p in params:
        p.zero_grad()
    backward(loss_fn())
    worst = 0.0
    rng = rng or np.random.default_rng(0)
    for p in params:
        flat = p.data.reshape(-1)
        analytic = p.grad.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        for k in idx:
            orig = flat[k]
            flat[k] = orig + eps
            fp = loss_fn().item()
            flat[k] = orig - eps
            fm = loss_fn().item()
            flat[k] = orig
            num = (fp - fm) / (2.0 * eps)
            denom = max(abs(analytic[k]), abs(num), floor)
            worst = max(worst, abs(analytic[k] - num) / denom)
    return worst
