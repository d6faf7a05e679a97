"""Label-assignment strategies over a pairwise loss matrix.

``entries[i, j]`` is the loss of pairing estimate ``i`` with target ``j``; a
permutation ``mapping`` assigns target ``mapping[i]`` to estimate ``i``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .core import as_loss_matrix, as_permutation

# exhaustive search up to this size, Hungarian above
EXHAUSTIVE_MAX_N = 4

SINKHORN_TOL = 1e-10
SINKHORN_MAX_SWEEPS = 20000


@dataclass(frozen=True)
class AssignmentResult:
    permutation: tuple[int, ...]
    total_loss: float
    soft: bool = False


@dataclass(frozen=True)
class SinkhornPlan:
    gamma: np.ndarray
    beta: float
    iterations: int  # sweeps actually run, annealing included


@lru_cache(maxsize=None)
def all_permutations(n: int) -> np.ndarray:
    """All permutations of ``range(n)`` in lexicographic order, shape (n!, n)."""
    return np.array(list(itertools.permutations(range(n))), dtype=np.int64).reshape(-1, n)


def selected_mean(matrix: np.ndarray, perm) -> float:
    """Mean of ``matrix[i, perm[i]]``, summed in row order."""
    total = 0.0
    for i, j in enumerate(perm):
        total += float(matrix[i, j])
    return total / len(perm)


def exhaustive_select(matrix) -> AssignmentResult:
    """Enumerate all N! permutations; ties go to the lexicographically smallest."""
    m = as_loss_matrix(matrix)
    perms = all_permutations(m.shape[0])
    idx, _ = kernels.batch_exhaustive(np.ascontiguousarray(m[None]), perms)
    perm = tuple(int(v) for v in perms[idx[0]])
    return AssignmentResult(perm, selected_mean(m, perm))


def hungarian_select(matrix) -> AssignmentResult:
    m = as_loss_matrix(matrix)
    perm = tuple(int(v) for v in kernels.hungarian(np.ascontiguousarray(m)))
    return AssignmentResult(perm, selected_mean(m, perm))


def pit_select(matrix) -> AssignmentResult:
    """Minimum mean-loss permutation (classic PIT)."""
    m = as_loss_matrix(matrix)
    if m.shape[0] <= EXHAUSTIVE_MAX_N:
        return exhaustive_select(m)
    return hungarian_select(m)


def batch_pit(matrices) -> tuple[np.ndarray, np.ndarray]:
    """PIT over a stack of (..., N, N) matrices.

    Returns ``(perms, losses)`` with shapes (..., N) and (...); losses are the
    mean selected entry, matching ``pit_select(m).total_loss`` bit for bit.
    """
    mats = np.asarray(matrices, dtype=np.float64)
    lead = mats.shape[:-2]
    n = mats.shape[-1]
    flat = np.ascontiguousarray(mats.reshape(-1, n, n))
    if n <= EXHAUSTIVE_MAX_N:
        table = all_permutations(n)
        idx, _ = kernels.batch_exhaustive(flat, table)
        perms = table[idx]
    else:
        perms = np.stack([kernels.hungarian(np.ascontiguousarray(m)) for m in flat])
    losses = np.array([selected_mean(m, p) for m, p in zip(flat, perms)])
    return perms.reshape(*lead, n), losses.reshape(lead)


def fixed_assignment_loss(matrix, fixed) -> AssignmentResult:
    """Loss under a supplied permutation (the PIT-fix step)."""
    m = as_loss_matrix(matrix)
    perm = as_permutation(fixed, m.shape[0])
    return AssignmentResult(perm, selected_mean(m, perm))


def sinkhorn_plan(matrix, beta: float, iterations: int = 50, tol: float = SINKHORN_TOL) -> SinkhornPlan:
    """Doubly stochastic plan for ``exp(-beta * entries)``.

    Runs at least ``iterations`` sweeps at ``beta``, then continues until the
    marginals are within ``tol`` of 1 (capped at ``SINKHORN_MAX_SWEEPS``).
    """
    m = as_loss_matrix(matrix)
    if not beta > 0 or not math.isfinite(beta):
        raise ValueError(f"beta must be a positive finite number, got {beta}")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    gamma, sweeps = kernels.sinkhorn(np.ascontiguousarray(m), float(beta), int(iterations), float(tol),
                                     max(int(iterations), SINKHORN_MAX_SWEEPS))
    return SinkhornPlan(gamma, float(beta), int(sweeps))


def sinkpit_loss(matrix, beta: float, iterations: int = 50) -> tuple[float, SinkhornPlan]:
    """Soft PIT loss ``(1/N) sum_ij gamma_ij * entries_ij``.

    ``gamma`` is the Sinkhorn normalisation of the Gibbs kernel
    ``exp(-beta * entries)``, computed in the log domain.
    """
    m = as_loss_matrix(matrix)
    plan = sinkhorn_plan(m, beta, iterations)
    return float(np.sum(plan.gamma * m) / m.shape[0]), plan


def sinkpit_select(matrix, beta: float, iterations: int = 50) -> AssignmentResult:
    """Soft selection; ``permutation`` is the hard argmax of the plan, for logging."""
    m = as_loss_matrix(matrix)
    loss, plan = sinkpit_loss(m, beta, iterations)
    perm = exhaustive_select(-plan.gamma).permutation if m.shape[0] <= EXHAUSTIVE_MAX_N \
        else hungarian_select(-plan.gamma).permutation
    return AssignmentResult(perm, loss, soft=True)


def beta_schedule(epoch: int, total_epochs: int, start: float = 2.0, end: float = 20.0) -> float:
    """Geometric ramp from ``start`` to ``end`` over the first half of training."""
    ramp = max(1, total_epochs // 2)
    if epoch >= ramp:
        return float(end)
    frac = (epoch - 1) / max(1, ramp - 1)
    return float(start * (end / start) ** frac)


def permutation_matrix(perm, n: int | None = None) -> np.ndarray:
    n = len(perm) if n is None else n
    out = np.zeros((n, n))
    out[np.arange(n), np.asarray(perm)] = 1.0
    return out
