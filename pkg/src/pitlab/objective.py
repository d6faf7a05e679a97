"""Differentiable negated SI-SDR, mirroring :func:`pitlab.core.si_sdr`."""

import numpy as np

from . import autodiff as ad
from .core import DELTA, _TINY


def si_sdr_tensor(estimate: ad.Tensor, target: np.ndarray) -> ad.Tensor:
    """SI-SDR over the last axis; ``target`` is a constant array of the same shape."""
    tgt = np.asarray(target, dtype=np.float64)
    if estimate.shape != tgt.shape:
        raise ValueError(f"shape mismatch {estimate.shape} vs {tgt.shape}")
    red = estimate.shape[:-1] + (1,)
    t_energy = np.sum(tgt * tgt, axis=-1, keepdims=True) + DELTA
    dot = ad.sum_(ad.mul(estimate, tgt), axis=-1, keepdims=True)
    alpha = ad.div(dot, t_energy)
    proj = ad.mul(ad.broadcast_to(alpha, estimate.shape), tgt)
    err = ad.sub(estimate, proj)
    guard = ad.add(ad.mul(ad.sum_(ad.mul(estimate, estimate), axis=-1, keepdims=True), DELTA), _TINY)
    num = ad.add(ad.sum_(ad.mul(proj, proj), axis=-1, keepdims=True), guard)
    den = ad.add(ad.sum_(ad.mul(err, err), axis=-1, keepdims=True), guard)
    out = ad.mul(ad.log10(ad.div(num, den)), 10.0)
    return ad.reshape(out, red[:-1])


def pairwise_neg_si_sdr(estimates: ad.Tensor, targets: np.ndarray) -> ad.Tensor:
    """Loss matrices ``(..., K, K)`` from estimates ``(..., K, T)`` and targets ``(..., K, T)``.

    ``targets`` may omit leading axes of ``estimates`` (e.g. a layer axis);
    they are broadcast.
    """
    *lead, k, t = estimates.shape
    tgt = np.asarray(targets, dtype=np.float64)
    full = tuple(lead) + (k, k, t)
    est = ad.broadcast_to(ad.reshape(estimates, tuple(lead) + (k, 1, t)), full)
    tgt = np.broadcast_to(tgt[..., None, :, :], full)
    return ad.mul(si_sdr_tensor(est, tgt), -1.0)
