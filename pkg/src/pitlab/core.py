"""Shared domain helpers and the SI-SDR family of signal metrics.

All metrics run in float64.  The guard ``DELTA`` is applied relative to the
energy of the signal that sets the scale of each ratio (the estimate for
SI-SDR, the target for SDR), which keeps SI-SDR exactly invariant to estimate
rescaling and caps a perfect reconstruction at ``10*log10((1+DELTA)/DELTA)``
(about 80 dB) for any signal energy.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

DELTA = 1e-8
MAX_DB = 10.0 * math.log10((1.0 + DELTA) / DELTA)
# keeps 0/0 finite for an all-zero estimate
_TINY = 1e-300


class MetricError(ValueError):
    pass


def as_waveform(x, name="waveform") -> np.ndarray:
    """Validate and convert ``x`` to a finite 1-D float64 array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 1:
        raise MetricError(f"{name} must be a non-empty 1-D signal, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise MetricError(f"{name} contains non-finite values")
    return arr


def as_permutation(mapping, n: int | None = None) -> tuple[int, ...]:
    perm = tuple(int(v) for v in mapping)
    size = len(perm) if n is None else n
    if len(perm) != size or sorted(perm) != list(range(size)):
        raise ValueError(f"{mapping!r} is not a permutation of 0..{size - 1}")
    return perm


def as_loss_matrix(matrix) -> np.ndarray:
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise ValueError(f"loss matrix must be square and non-empty, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("loss matrix contains non-finite entries")
    return m


def _check_pair(estimate, target):
    est = np.asarray(estimate, dtype=np.float64)
    tgt = np.asarray(target, dtype=np.float64)
    if est.shape != tgt.shape:
        raise MetricError(f"length mismatch: estimate {est.shape} vs target {tgt.shape}")
    if est.shape[-1] < 1:
        raise MetricError("empty signal")
    if np.any(np.all(tgt == 0.0, axis=-1)):
        raise MetricError("target is identically zero")
    return est, tgt


def si_sdr(estimate, target):
    """Scale-invariant SDR in dB.

    Works on the last axis, so stacks of signals give stacks of values.
    """
    est, tgt = _check_pair(estimate, target)
    dot = np.sum(est * tgt, axis=-1, keepdims=True)
    t_energy = np.sum(tgt * tgt, axis=-1, keepdims=True)
    proj = dot / (t_energy + DELTA) * tgt
    err = est - proj
    guard = DELTA * np.sum(est * est, axis=-1) + _TINY
    num = np.sum(proj * proj, axis=-1) + guard
    den = np.sum(err * err, axis=-1) + guard
    out = 10.0 * np.log10(num / den)
    return float(out) if out.ndim == 0 else out


def sdr(estimate, target):
    """Plain SDR in dB, ``10*log10(|t|^2 / |t - e|^2)`` with a relative guard."""
    est, tgt = _check_pair(estimate, target)
    t_energy = np.sum(tgt * tgt, axis=-1)
    diff = tgt - est
    guard = DELTA * t_energy
    out = 10.0 * np.log10((t_energy + guard) / (np.sum(diff * diff, axis=-1) + guard))
    return float(out) if out.ndim == 0 else out


METRICS = {"si_sdr": si_sdr, "sdr": sdr}


def metric_improvement(estimate, target, mixture, metric="si_sdr"):
    """``metric(estimate, target) - metric(mixture, target)`` (SI-SDRi / SDRi)."""
    try:
        fn = METRICS[metric] if isinstance(metric, str) else metric
    except KeyError:
        raise MetricError(f"unknown metric {metric!r}") from None
    est = np.asarray(estimate, dtype=np.float64)
    mix = np.asarray(mixture, dtype=np.float64)
    if mix.shape != est.shape:
        raise MetricError(f"length mismatch: mixture {mix.shape} vs estimate {est.shape}")
    return fn(est, target) - fn(mix, target)


def pairwise_loss_matrix(estimates: Sequence, targets: Sequence, loss=None) -> np.ndarray:
    """N x N matrix with ``entries[i, j] = loss(estimates[i], targets[j])``.

    The default loss is negated SI-SDR, evaluated in one vectorised pass.
    """
    est = np.asarray(estimates, dtype=np.float64)
    tgt = np.asarray(targets, dtype=np.float64)
    if est.ndim != 2 or tgt.ndim != 2:
        raise MetricError("estimates and targets must be stacks of 1-D signals")
    if est.shape[0] != tgt.shape[0] or est.shape[0] < 1:
        raise MetricError(f"count mismatch: {est.shape[0]} estimates vs {tgt.shape[0]} targets")
    if est.shape[1] != tgt.shape[1]:
        raise MetricError("length mismatch between estimates and targets")
    n = est.shape[0]
    if loss is None:
        e = np.broadcast_to(est[:, None, :], (n, n, est.shape[1]))
        t = np.broadcast_to(tgt[None, :, :], (n, n, tgt.shape[1]))
        return -si_sdr(e, t)
    out = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = loss(est[i], tgt[j])
    return out
