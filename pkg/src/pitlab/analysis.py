"""Label-assignment switching curves and layer-decoupling distances.

Switching ratios are percentages; curve distances are L1 sums of percentage
points over epochs 2..E.
"""

from __future__ import annotations

import csv
import io
import json

import numpy as np

UNIT = "percentage points, summed over epochs 2..E"


class SwitchLog:
    """Per-epoch, per-layer PIT permutations for a fixed set of sample ids."""

    def __init__(self, ids, n_layers: int):
        self.ids = np.asarray(ids, dtype=np.int64)
        self.n_layers = int(n_layers)
        self._epochs: dict[int, np.ndarray] = {}

    def record(self, epoch: int, perms):
        """``perms`` has shape ``(n_layers, n_ids, K)``, rows aligned with ``ids``."""
        arr = np.asarray(perms, dtype=np.int64)
        if arr.shape[:2] != (self.n_layers, len(self.ids)):
            raise ValueError(f"expected ({self.n_layers}, {len(self.ids)}, K) permutations, got {arr.shape}")
        k = arr.shape[2]
        if not np.all(np.sort(arr, axis=-1) == np.arange(k)):
            raise ValueError("log contains invalid permutations")
        self._epochs[int(epoch)] = arr.copy()

    @property
    def epochs(self):
        return sorted(self._epochs)

    def perms(self, epoch):
        try:
            return self._epochs[int(epoch)]
        except KeyError:
            raise KeyError(f"epoch {epoch} not logged") from None


def switching_ratio(log: SwitchLog, epoch: int, layer: int) -> float:
    """Percent of samples whose layer-``layer`` permutation changed since ``epoch - 1``.

    ``layer`` is 1-based, like the CSV columns.
    """
    if epoch < 2:
        raise ValueError("switching ratio needs epoch >= 2")
    cur = log.perms(epoch)[layer - 1]
    prev = log.perms(epoch - 1)[layer - 1]
    changed = np.any(cur != prev, axis=-1)
    return 100.0 * float(np.count_nonzero(changed)) / len(changed)


def switching_curve(log: SwitchLog, layer: int) -> np.ndarray:
    epochs = log.epochs
    return np.array([switching_ratio(log, e, layer) for e in epochs if e - 1 in log._epochs])


def curve_l1_distance(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"curve length mismatch {a.shape} vs {b.shape}")
    return float(np.sum(np.abs(a - b)))


def decoupling_report(log: SwitchLog) -> dict[str, float]:
    """``{"i_vs_N": distance}`` for every intermediate layer i against the last."""
    n = log.n_layers
    if n < 2:
        raise ValueError("decoupling needs at least two logged layers")
    last = switching_curve(log, n)
    return {f"{i}_vs_{n}": curve_l1_distance(switching_curve(log, i), last) for i in range(1, n)}


def curves_csv(log: SwitchLog) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch"] + [f"layer_{i}" for i in range(1, log.n_layers + 1)])
    for e in log.epochs:
        if e - 1 not in log._epochs:
            continue
        w.writerow([e] + [repr(switching_ratio(log, e, i)) for i in range(1, log.n_layers + 1)])
    return buf.getvalue()


def decoupling_json(log: SwitchLog) -> str:
    dist = decoupling_report(log)
    doc = {"unit": UNIT, "n_layers": log.n_layers, "distances": dist, "total": float(sum(dist.values()))}
    return json.dumps(doc, indent=1) + "\n"
