"""Layer-wise optimisation: weighted sum of per-layer PIT losses.

    loss = (1/N) * sum_i w_i * PIT(layer_i estimates, targets)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assignment import fixed_assignment_loss, pit_select
from .core import pairwise_loss_matrix
from .dsd import Decision, DecisionKind, DsdConfig, MemoryBank, dsd_decide


def default_weights(n_blocks: int) -> np.ndarray:
    """``w_i = i / n_blocks`` for blocks ``i = 1..n_blocks``."""
    if n_blocks < 1:
        raise ValueError("n_blocks must be >= 1")
    return np.arange(1, n_blocks + 1, dtype=np.float64) / n_blocks


def validate_weights(weights, n_blocks: int | None = None) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if n_blocks is not None and w.size != n_blocks:
        raise ValueError(f"{w.size} weights for {n_blocks} layers")
    if w.size < 1 or np.any(w < 0) or not w[-1] > 0:
        raise ValueError("layer weights must be >= 0 with a positive last weight")
    return w


@dataclass
class LayerwiseResult:
    loss: float
    per_layer_assignments: list
    per_layer_losses: np.ndarray


def layer_matrices(outputs, targets) -> np.ndarray:
    """Pairwise negated SI-SDR matrices for every layer, shape ``(N, K, K)``."""
    return np.stack([pairwise_loss_matrix(layer, targets) for layer in outputs])


def weighted_sum(weights, losses) -> float:
    """``sum_i w_i * l_i`` with equal losses factored out first.

    Grouping makes identical layers cost a single rounding (``p * sum(w)``),
    so reductions like ``7p/12`` come out exact.
    """
    groups: dict = {}
    for wi, li in zip(weights, losses):
        groups.setdefault(float(li), []).append(float(wi))
    return math.fsum(v * math.fsum(ws) for v, ws in groups.items())


def layerwise_from_matrices(matrices, weights, selector=pit_select, tie_to_last=False) -> LayerwiseResult:
    mats = np.asarray(matrices, dtype=np.float64)
    w = validate_weights(weights, len(mats))
    if tie_to_last:
        last = selector(mats[-1]).permutation
        results = [fixed_assignment_loss(m, last) for m in mats]
    else:
        results = [selector(m) for m in mats]
    losses = np.array([r.total_loss for r in results])
    return LayerwiseResult(weighted_sum(w, losses) / len(mats), [r.permutation for r in results], losses)


def layerwise_loss(outputs, targets, weights, selector=pit_select, tie_to_last=False) -> LayerwiseResult:
    """Layer-wise loss over ``outputs`` (one ``(K, T)`` stack per layer).

    Each layer picks its permutation independently unless ``tie_to_last``.
    """
    return layerwise_from_matrices(layer_matrices(outputs, targets), weights, selector, tie_to_last)


@dataclass
class LoDsdResult:
    loss: float
    decision: Decision
    per_layer_assignments: list
    per_layer_losses: np.ndarray | None


def lo_with_dsd(outputs, targets, weights, bank: MemoryBank, dsd_config: DsdConfig,
                sample_id: int, epoch: int, selector=pit_select) -> LoDsdResult:
    """Layer-wise loss for one sample, gated by a DSD decision on the final layer.

    A dropped sample returns loss 0.0 with ``per_layer_losses=None``; the
    caller excludes it from the batch mean.  Reorder re-scores every layer
    under the stored permutation.
    """
    mats = layer_matrices(outputs, targets)
    res = layerwise_from_matrices(mats, weights, selector)
    final = res.per_layer_assignments[-1]
    metric = -res.per_layer_losses[-1]
    decision = dsd_decide(sample_id, epoch, final, metric, bank, dsd_config)
    if decision.kind is DecisionKind.DROPOUT:
        return LoDsdResult(0.0, decision, res.per_layer_assignments, None)
    if decision.kind is DecisionKind.REORDER:
        stored = decision.assignment_to_use
        fixed = [fixed_assignment_loss(m, stored) for m in mats]
        losses = np.array([r.total_loss for r in fixed])
        w = validate_weights(weights, len(mats))
        return LoDsdResult(weighted_sum(w, losses) / len(mats), decision, [stored] * len(mats), losses)
    return LoDsdResult(res.loss, decision, res.per_layer_assignments, res.per_layer_losses)


def selection_weights(perms, layer_weights, keep, soft=None) -> np.ndarray:
    """Constant weights ``W`` so that ``sum(W * loss_matrices)`` is the batch loss sum.

    ``perms`` is ``(L, B, K)``; ``keep`` masks samples out; ``soft`` optionally
    replaces the one-hot selection with ``(L, B, K, K)`` transport plans.
    """
    perms = np.asarray(perms)
    n_layer, batch, k = perms.shape
    if soft is None:
        sel = np.zeros((n_layer, batch, k, k))
        li, bi, ri = np.meshgrid(np.arange(n_layer), np.arange(batch), np.arange(k), indexing="ij")
        sel[li, bi, ri, perms] = 1.0
    else:
        sel = np.asarray(soft, dtype=np.float64)
    lw = np.asarray(layer_weights, dtype=np.float64).reshape(n_layer, 1, 1, 1)
    mask = np.asarray(keep, dtype=np.float64).reshape(1, batch, 1, 1)
    return sel * lw * mask / k
