"""Experiment runner: train one strategy end to end, log dynamics, compare runs."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import lo
from .analysis import (SwitchLog, curves_csv, decoupling_json, decoupling_report, switching_curve,
                       switching_ratio)
from .core import si_sdr
from .assignment import batch_pit, beta_schedule, sinkhorn_plan
from .data import DatasetConfig, epoch_batches, generate, stack_batch
from .dsd import DecisionKind, DsdConfig, DsdEpochStats, MemoryBank, dsd_decide
from .model import SeparatorConfig, SeparatorModel
from .objective import pairwise_neg_si_sdr

log = logging.getLogger(__name__)

STRATEGIES = ("pit", "pit_fix", "sinkpit", "dsd", "lo", "dsd_lo")


class ConfigError(ValueError):
    pass


def _float(v):
    if isinstance(v, str):
        if v.strip().lower() in ("inf", "+inf", "infinity"):
            return math.inf
        return float(v)
    return math.inf if v is None else float(v)


@dataclass
class StrategyConfig:
    name: str = "pit"
    # pit_fix
    L: int = 1
    # sinkpit
    beta_start: float = 2.0
    beta_end: float = 20.0
    sinkhorn_iterations: int = 50
    # dsd / dsd_lo
    epsilon: float = 0.1
    mode: str = "dropout"
    always_update_on_keep: bool = False
    # lo / dsd_lo; None means i / n_blocks
    weights: list | None = None
    tie_to_last: bool = False

    def __post_init__(self):
        if self.name not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.name!r}; choose from {', '.join(STRATEGIES)}")
        self.epsilon = _float(self.epsilon)
        if self.name in ("dsd", "dsd_lo"):
            try:
                DsdConfig(self.epsilon, self.mode)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None

    @property
    def layerwise(self):
        return self.name in ("lo", "dsd_lo")

    @property
    def uses_dsd(self):
        return self.name in ("dsd", "dsd_lo")

    def to_dict(self):
        d = asdict(self)
        if math.isinf(d["epsilon"]):
            d["epsilon"] = "inf"
        return d


@dataclass
class RunConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: SeparatorConfig = field(default_factory=SeparatorConfig)
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    epochs: int = 60
    batch_size: int = 8
    learning_rate: float = 1e-3
    clip_norm: float = 5.0
    seed: int = 0
    out_dir: str = "runs/default"
    valid_samples: int = 50
    lr_patience_early: int = 10
    lr_patience_late: int = 5
    # None: 40% of the run, the same fraction as 80 of 200 epochs
    lr_patience_switch_epoch: int | None = None
    checkpoint_every: int = 10

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0 or self.clip_norm <= 0:
            raise ConfigError("learning_rate and clip_norm must be positive")
        if self.strategy.name == "pit_fix" and not 1 <= self.strategy.L <= self.epochs:
            raise ConfigError("pit_fix needs 1 <= L <= epochs")
        if self.dataset.n_sources != self.model.n_sources:
            raise ConfigError("dataset.n_sources and model.n_sources differ")
        if self.dataset.sample_length < self.model.frame_size:
            raise ConfigError("dataset.sample_length must be >= model.frame_size")
        if self.strategy.weights is not None:
            try:
                lo.validate_weights(self.strategy.weights, self.model.n_blocks)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None

    @property
    def switch_epoch(self):
        if self.lr_patience_switch_epoch is not None:
            return self.lr_patience_switch_epoch
        return round(0.4 * self.epochs)

    def to_dict(self):
        d = asdict(self)
        d["strategy"] = self.strategy.to_dict()
        return d


def config_from_dict(doc: dict) -> RunConfig:
    doc = dict(doc)
    try:
        ds = DatasetConfig(**doc.pop("dataset", {}))
        md = SeparatorConfig(**doc.pop("model", {}))
        st = doc.pop("strategy", {})
        if isinstance(st, str):
            st = {"name": st}
        st = StrategyConfig(**st)
        return RunConfig(dataset=ds, model=md, strategy=st, **doc)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return config_from_dict(doc)


EPOCH_COLUMNS = ("epoch", "train_loss", "valid_si_sdri")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    valid_si_sdri: float
    switching: list  # percent per layer; None at epoch 1
    drop_rate: float
    learning_rate: float


def _fmt(v):
    return "" if v is None else repr(float(v))


def epochs_csv(records, n_layers) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(EPOCH_COLUMNS) + [f"switch_layer_{i}" for i in range(1, n_layers + 1)]
               + ["drop_rate", "learning_rate"])
    for r in records:
        sw = r.switching if r.switching is not None else [None] * n_layers
        w.writerow([r.epoch, _fmt(r.train_loss), _fmt(r.valid_si_sdri)] + [_fmt(v) for v in sw]
                   + [_fmt(r.drop_rate), _fmt(r.learning_rate)])
    return buf.getvalue()


def read_epochs_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (float(v) if v != "" else None) for k, v in row.items()} for row in rows]


class Trainer:
    """One training run; state lives here so tests can step it epoch by epoch."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.strategy = config.strategy
        self.train_set = generate(config.dataset, split=0)
        valid_cfg = DatasetConfig(**{**config.dataset.to_dict(), "n_samples": config.valid_samples})
        self.valid_set = generate(valid_cfg, split=1)
        self.model = SeparatorModel(config.model, seed=config.seed)
        self.params = self.model.parameters()
        self.optimizer = ad.Adam(self.params, lr=config.learning_rate)
        self.scheduler = ad.PlateauScheduler(config.learning_rate, config.lr_patience_early,
                                             config.lr_patience_late, config.switch_epoch)
        self.bank = MemoryBank()
        self.dsd_config = DsdConfig(self.strategy.epsilon, self.strategy.mode,
                                    self.strategy.always_update_on_keep) if self.strategy.uses_dsd else None
        n_blocks = config.model.n_blocks
        w = self.strategy.weights if self.strategy.weights is not None else lo.default_weights(n_blocks)
        self.layer_weights = lo.validate_weights(w, n_blocks)
        self.switch_log = SwitchLog([s.id for s in self.train_set], n_blocks)
        self.records: list[EpochRecord] = []
        self.epoch_stats: list[DsdEpochStats] = []
        self.epoch = 0

    # -- one optimisation step ------------------------------------------------

    def _step(self, batch, epoch, stats):
        st = self.strategy
        k = self.config.model.n_sources
        ids, mix, tgt = stack_batch(batch)
        est = self.model.forward(mix, layers="all" if st.layerwise else "last")
        lm = pairwise_neg_si_sdr(est, tgt)
        mats = lm.data
        perms, losses = batch_pit(mats)
        n_layer, batch_n = perms.shape[:2]
        if st.tie_to_last:
            perms[:] = perms[-1:]
        keep = np.ones(batch_n, dtype=bool)
        soft = None

        if st.name == "pit_fix" and epoch > st.L:
            for b, sid in enumerate(ids):
                perms[:, b] = self.bank.get(sid).best_assignment
        elif st.name == "sinkpit":
            beta = beta_schedule(epoch, self.config.epochs, st.beta_start, st.beta_end)
            soft = np.stack([[sinkhorn_plan(mats[l, b], beta, st.sinkhorn_iterations).gamma
                              for b in range(batch_n)] for l in range(n_layer)])
        elif st.uses_dsd:
            for b, sid in enumerate(ids):
                d = dsd_decide(sid, epoch, perms[-1, b], -losses[-1, b], self.bank, self.dsd_config)
                stats.add(sid, d)
                if d.kind is DecisionKind.DROPOUT:
                    keep[b] = False
                elif d.kind is DecisionKind.REORDER:
                    perms[:, b] = d.assignment_to_use

        if st.name == "pit_fix" and epoch == st.L:
            for b, sid in enumerate(ids):
                self.bank.record(sid, -losses[-1, b], perms[-1, b], epoch)

        layer_w = self.layer_weights / n_layer if st.layerwise else np.ones(1)
        n_kept = int(np.count_nonzero(keep))
        if n_kept == 0:
            return None
        weights = lo.selection_weights(perms, layer_w, keep, soft)
        loss = ad.mul(ad.sum_(ad.mul(lm, weights)), 1.0 / n_kept)
        ad.zero_grad(self.params)
        ad.backward(loss)
        ad.clip_global_norm(self.params, self.config.clip_norm)
        self.optimizer.step()
        return loss.item()

    # -- post-epoch evaluation --------------------------------------------------

    def _assignments(self, dataset, chunk=50, layers="all"):
        """Per-layer PIT permutations and final-layer SI-SDRi, no gradients."""
        perms_all, sisdri = [], []
        with ad.no_grad():
            for s in range(0, len(dataset), chunk):
                ids, mix, tgt = stack_batch(dataset[s:s + chunk])
                est = self.model.forward(mix, layers=layers)
                mats = pairwise_neg_si_sdr(est, tgt).data
                perms, losses = batch_pit(mats)
                perms_all.append(perms)
                base = np.mean(si_sdr(np.broadcast_to(mix[:, None, :], tgt.shape), tgt), axis=-1)
                sisdri.append(-losses[-1] - base)
        return np.concatenate(perms_all, axis=1), np.concatenate(sisdri)

    def train_epoch(self):
        self.epoch += 1
        epoch = self.epoch
        lr = self.optimizer.lr
        stats = DsdEpochStats(epoch=epoch)
        step_losses = []
        for batch in epoch_batches(self.train_set, self.config.batch_size, epoch, self.config.seed):
            val = self._step(batch, epoch, stats)
            if val is not None:
                step_losses.append(val)
        self.epoch_stats.append(stats)

        perms, _ = self._assignments(self.train_set)
        self.switch_log.record(epoch, perms)
        _, valid = self._assignments(self.valid_set, layers="last")
        valid_sisdri = float(np.mean(valid))
        self.optimizer.lr = self.scheduler.step(valid_sisdri)

        switching = None
        if epoch >= 2:
            switching = [switching_ratio(self.switch_log, epoch, i)
                         for i in range(1, self.config.model.n_blocks + 1)]
        train_loss = float(np.mean(step_losses)) if step_losses else float("nan")
        rec = EpochRecord(epoch, train_loss, valid_sisdri, switching,
                          len(stats.dropped_ids) / len(self.train_set), lr)
        self.records.append(rec)
        return rec


def run(config: RunConfig, quiet=False) -> Path:
    """Train, writing epochs.csv, switching.csv, decoupling.json, bank.txt, report.json."""
    out = Path(config.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"out_dir {out} is not writable: {exc}") from None
    (out / "config.json").write_text(json.dumps(config.to_dict(), indent=1) + "\n")

    t0 = time.perf_counter()
    trainer = Trainer(config)
    n_layers = config.model.n_blocks
    for _ in range(config.epochs):
        rec = trainer.train_epoch()
        if not quiet:
            log.info("epoch %d loss %.4f valid SI-SDRi %.3f dB drop %.3f", rec.epoch, rec.train_loss,
                     rec.valid_si_sdri, rec.drop_rate)
        if config.checkpoint_every and rec.epoch % config.checkpoint_every == 0:
            ad.save_tensors(out / "checkpoints" / f"epoch_{rec.epoch:04d}", trainer.model.state_dict())
        (out / "epochs.csv").write_text(epochs_csv(trainer.records, n_layers))

    (out / "switching.csv").write_text(curves_csv(trainer.switch_log))
    (out / "bank.txt").write_text(trainer.bank.dumps())
    ad.save_tensors(out / "checkpoints" / "final", trainer.model.state_dict())
    decoupling = None
    if n_layers >= 2 and config.epochs >= 2:
        (out / "decoupling.json").write_text(decoupling_json(trainer.switch_log))
        decoupling = decoupling_report(trainer.switch_log)
    best = max(trainer.records, key=lambda r: r.valid_si_sdri)
    report = {
        "strategy": config.strategy.to_dict(),
        "seed": config.seed,
        "epochs": config.epochs,
        "best_valid_si_sdri": best.valid_si_sdri,
        "best_epoch": best.epoch,
        "final_valid_si_sdri": trainer.records[-1].valid_si_sdri,
        "total_drops": int(sum(len(s.dropped_ids) for s in trainer.epoch_stats)),
        "total_reorders": int(sum(len(s.reordered_ids) for s in trainer.epoch_stats)),
        "decoupling": decoupling,
        "decoupling_total": None if decoupling is None else float(sum(decoupling.values())),
        "wall_time_s": time.perf_counter() - t0,
    }
    (out / "report.json").write_text(json.dumps(report, indent=1) + "\n")
    return out


def final_third_switching(rows, layer=None) -> float | None:
    """Mean switching ratio of ``layer`` (default: last) over the final third of epochs."""
    cols = [c for c in rows[0] if c.startswith("switch_layer_")]
    col = cols[-1] if layer is None else f"switch_layer_{layer}"
    n = len(rows)
    start = n - max(1, n // 3)
    vals = [r[col] for r in rows[start:] if r[col] is not None]
    return float(np.mean(vals)) if vals else None


def summarize_run(run_dir) -> dict:
    run_dir = Path(run_dir)
    rows = read_epochs_csv(run_dir / "epochs.csv")
    report = json.loads((run_dir / "report.json").read_text())
    dec_path = run_dir / "decoupling.json"
    dec = json.loads(dec_path.read_text())["distances"] if dec_path.exists() else {}
    return {
        "run": str(run_dir),
        "strategy": report["strategy"]["name"],
        "epochs": len(rows),
        "best_valid_si_sdri": max(r["valid_si_sdri"] for r in rows),
        "final_third_switching": final_third_switching(rows),
        "decoupling": dec,
        "decoupling_total": float(sum(dec.values())) if dec else None,
    }


def compare(run_dirs, out=None) -> dict:
    """Side-by-side summary; deltas are relative to the first run."""
    if len(run_dirs) < 2:
        raise ConfigError("compare needs at least two runs")
    summaries = [summarize_run(d) for d in run_dirs]
    if len({s["epochs"] for s in summaries}) != 1:
        raise ConfigError("runs have different epoch counts")
    ref = summaries[0]
    for s in summaries:
        s["delta"] = {
            "best_valid_si_sdri": s["best_valid_si_sdri"] - ref["best_valid_si_sdri"],
            "final_third_switching": None if s["final_third_switching"] is None
            else s["final_third_switching"] - ref["final_third_switching"],
            "decoupling": {k: v - ref["decoupling"][k] for k, v in s["decoupling"].items()
                           if k in ref["decoupling"]},
        }
    doc = {"reference": ref["run"], "runs": summaries}
    if out is not None:
        Path(out).write_text(json.dumps(doc, indent=1) + "\n")
    return doc


def switching_curves(trainer: Trainer) -> np.ndarray:
    return np.stack([switching_curve(trainer.switch_log, i)
                     for i in range(1, trainer.switch_log.n_layers + 1)])
