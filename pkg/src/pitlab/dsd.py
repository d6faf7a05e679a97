"""Dynamic sample dropout: per-sample memory bank and select/dropout/reorder rules."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import as_permutation


class DecisionKind(enum.Enum):
    SELECT_KEEP = "SelectKeep"
    SELECT_UPDATE = "SelectUpdate"
    DROPOUT = "Dropout"
    REORDER = "Reorder"


@dataclass(frozen=True)
class Decision:
    kind: DecisionKind
    assignment_to_use: tuple[int, ...] | None

    @property
    def dropped(self) -> bool:
        return self.kind is DecisionKind.DROPOUT


@dataclass
class DsdConfig:
    epsilon: float = 0.1
    mode: str = "dropout"
    # overwrite best_metric on an unchanged assignment even if it got worse
    always_update_on_keep: bool = False

    def __post_init__(self):
        self.epsilon = float(self.epsilon)
        if math.isnan(self.epsilon) or self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0 or inf, got {self.epsilon}")
        if self.mode not in ("dropout", "reorder"):
            raise ValueError(f"mode must be 'dropout' or 'reorder', got {self.mode!r}")


@dataclass
class MemoryBankEntry:
    sample_id: int
    best_metric: float
    best_assignment: tuple[int, ...]
    updated_epoch: int


class UnknownSampleError(KeyError):
    pass


def relaxed_better(m_cur: float, m_best: float, epsilon: float) -> bool:
    """``m_cur * (1 + sgn(m_cur) * epsilon) > m_best``; always true for epsilon = inf."""
    if epsilon < 0:
        raise ValueError(f"epsilon must be non-negative, got {epsilon}")
    if math.isinf(epsilon):
        return True
    m_cur, m_best = float(m_cur), float(m_best)
    sign = (m_cur > 0) - (m_cur < 0)
    return m_cur * (1.0 + sign * epsilon) > m_best


class MemoryBank:
    """Best metric and assignment per sample id.

    Single writer: callers apply decisions in a fixed sample order.
    """

    def __init__(self):
        self._entries: dict[int, MemoryBankEntry] = {}

    def __contains__(self, sample_id):
        return int(sample_id) in self._entries

    def __len__(self):
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries[k] for k in sorted(self._entries))

    def get(self, sample_id) -> MemoryBankEntry:
        try:
            return self._entries[int(sample_id)]
        except KeyError:
            raise UnknownSampleError(sample_id) from None

    def record(self, sample_id, metric, assignment, epoch):
        sid = int(sample_id)
        self._entries[sid] = MemoryBankEntry(sid, float(metric), as_permutation(assignment), int(epoch))

    def snapshot(self) -> dict[int, MemoryBankEntry]:
        return {k: MemoryBankEntry(e.sample_id, e.best_metric, e.best_assignment, e.updated_epoch)
                for k, e in self._entries.items()}

    # line format: sample_id <TAB> best_metric <TAB> mapping <TAB> updated_epoch
    def dumps(self) -> str:
        lines = []
        for e in self:
            mapping = ",".join(str(v) for v in e.best_assignment)
            lines.append(f"{e.sample_id}\t{e.best_metric!r}\t{mapping}\t{e.updated_epoch}")
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def loads(cls, text: str) -> "MemoryBank":
        bank = cls()
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ValueError(f"bank line {lineno}: expected 4 tab-separated fields")
            sid, metric, mapping, epoch = parts
            bank.record(int(sid), float(metric), [int(v) for v in mapping.split(",")], int(epoch))
        return bank

    def save(self, path):
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "MemoryBank":
        return cls.loads(Path(path).read_text())


def dsd_decide(sample_id, epoch: int, current_assignment, current_metric: float,
               bank: MemoryBank, config: DsdConfig) -> Decision:
    """Decide whether a sample trains this step, and under which assignment.

    The bank is updated in place for ``SelectUpdate`` (and for an improved
    metric on ``SelectKeep``); ``Dropout`` and ``Reorder`` leave it untouched.
    """
    if epoch < 1:
        raise ValueError("epoch indices start at 1")
    current = as_permutation(current_assignment)
    if sample_id not in bank:
        if epoch > 1:
            raise UnknownSampleError(sample_id)
        bank.record(sample_id, current_metric, current, epoch)
        return Decision(DecisionKind.SELECT_UPDATE, current)

    entry = bank.get(sample_id)
    if current == entry.best_assignment:
        if current_metric > entry.best_metric or config.always_update_on_keep:
            bank.record(sample_id, current_metric, current, epoch)
        return Decision(DecisionKind.SELECT_KEEP, current)

    if relaxed_better(current_metric, entry.best_metric, config.epsilon):
        bank.record(sample_id, current_metric, current, epoch)
        return Decision(DecisionKind.SELECT_UPDATE, current)

    if config.mode == "reorder":
        return Decision(DecisionKind.REORDER, entry.best_assignment)
    return Decision(DecisionKind.DROPOUT, None)


@dataclass
class DsdEpochStats:
    epoch: int = 0
    counts: dict = field(default_factory=lambda: {k: 0 for k in DecisionKind})
    dropped_ids: set = field(default_factory=set)
    reordered_ids: set = field(default_factory=set)

    def add(self, sample_id, decision: Decision):
        self.counts[decision.kind] += 1
        if decision.kind is DecisionKind.DROPOUT:
            self.dropped_ids.add(int(sample_id))
        elif decision.kind is DecisionKind.REORDER:
            self.reordered_ids.add(int(sample_id))

    def merge(self, other: "DsdEpochStats"):
        for k, v in other.counts.items():
            self.counts[k] += v
        self.dropped_ids |= other.dropped_ids
        self.reordered_ids |= other.reordered_ids


def dsd_apply(decisions, losses, reorder_losses=None) -> tuple[float, DsdEpochStats]:
    """Combine per-sample losses under a batch of decisions.

    ``losses[b]`` is the sample's loss under its current assignment and
    ``reorder_losses[b]`` its loss under the stored one (needed only for
    ``Reorder``).  Dropped samples leave the denominator; an all-dropped batch
    yields 0.0, and the caller skips the optimizer step.
    """
    if len(decisions) != len(losses):
        raise ValueError("one decision per sample is required")
    stats = DsdEpochStats()
    kept = []
    for b, (sid, decision) in enumerate(decisions):
        stats.add(sid, decision)
        if decision.kind is DecisionKind.DROPOUT:
            continue
        if decision.kind is DecisionKind.REORDER:
            if reorder_losses is None:
                raise ValueError("reorder decision without reorder_losses")
            kept.append(float(reorder_losses[b]))
        else:
            kept.append(float(losses[b]))
    if not kept:
        return 0.0, stats
    return float(np.mean(kept)), stats


def drop_rate(stats: DsdEpochStats, dataset_size: int) -> float:
    """Unique dropped samples over the dataset size, for one epoch."""
    if dataset_size < 1:
        raise ValueError("dataset_size must be >= 1")
    return len(stats.dropped_ids) / dataset_size
