from __future__ import annotations

import math

import numpy as np


def zero_grad(params):
    for p in params:
        p.zero_grad()


def global_grad_norm(params) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    return math.sqrt(total)


def clip_global_norm(params, max_norm: float) -> float:
    """Rescale all grads so their joint L2 norm is at most ``max_norm``.

    Returns the scale that was applied (1.0 when no clipping happened).
    """
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    norm = global_grad_norm(params)
    if norm <= max_norm:
        return 1.0
    scale = max_norm / norm
    for p in params:
        if p.grad is not None:
            p.grad = p.grad * scale
    return scale


class Adam:
    """Adam with bias correction; betas and eps fixed to the usual defaults."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr = float(lr)
        self.betas = betas
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.step_count += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1 ** self.step_count
        c2 = 1.0 - b2 ** self.step_count
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_dict(self):
        return {"lr": self.lr, "step_count": self.step_count,
                "m": [a.copy() for a in self.m], "v": [a.copy() for a in self.v]}


class PlateauScheduler:
    """Halve the learning rate when the validation metric stalls.

    The metric is maximised.  Patience is ``patience_early`` up to and
    including ``switch_epoch`` and ``patience_late`` afterwards.  After a
    halving the stall counter restarts.
    """

    def __init__(self, lr, patience_early=10, patience_late=5, switch_epoch=80, factor=0.5):
        self.lr = float(lr)
        self.patience_early = patience_early
        self.patience_late = patience_late
        self.switch_epoch = switch_epoch
        self.factor = factor
        self.best = -math.inf
        self.bad_epochs = 0
        self.epoch = 0

    def patience(self, epoch):
        return self.patience_early if epoch <= self.switch_epoch else self.patience_late

    def step(self, metric: float) -> float:
        self.epoch += 1
        if metric > self.best:
            self.best = metric
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        if self.bad_epochs >= self.patience(self.epoch):
            self.lr *= self.factor
            self.bad_epochs = 0
        return self.lr


def plateau_scheduler(history, lr=1e-3, patience_early=10, patience_late=5, switch_epoch=80):
    """Replay a validation history; returns the learning rate after each epoch."""
    sched = PlateauScheduler(lr, patience_early, patience_late, switch_epoch)
    return [sched.step(m) for m in history]
