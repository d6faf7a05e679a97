"""Deterministic synthetic mixtures of band-limited sources.

Source ``k`` of every sample is a sum of 2-4 sinusoids drawn from band ``k``
(bands are disjoint), shaped by a slow random envelope.  Each source is a pure
function of ``(seed, split, sample index, k)``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

# normalised frequency range (cycles/sample) shared out between source classes
BAND_LO = 0.02
BAND_HI = 0.42
BAND_GAP = 0.02


@dataclass
class DatasetConfig:
    n_samples: int = 200
    n_sources: int = 2
    sample_length: int = 1024
    noise: str = "clean"
    noise_snr_db: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.n_sources not in (2, 3):
            raise ValueError("n_sources must be 2 or 3")
        if self.sample_length < 1:
            raise ValueError("sample_length must be >= 1")
        if self.noise not in ("clean", "noisy"):
            raise ValueError("noise must be 'clean' or 'noisy'")

    def to_dict(self):
        return asdict(self)


@dataclass
class MixtureSample:
    id: int
    mixture: np.ndarray
    targets: np.ndarray  # (K, T)


def source_bands(n_sources):
    edges = np.linspace(BAND_LO, BAND_HI, n_sources + 1)
    half_gap = BAND_GAP / 2
    return [(edges[k] + half_gap, edges[k + 1] - half_gap) for k in range(n_sources)]


def _rng(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def make_source(seed, split, index, k, n_sources, length):
    rng = _rng(seed, split, index, k)
    lo, hi = source_bands(n_sources)[k]
    t = np.arange(length, dtype=np.float64)
    n_tones = int(rng.integers(2, 5))
    freqs = rng.uniform(lo, hi, size=n_tones)
    amps = rng.uniform(0.3, 1.0, size=n_tones)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=n_tones)
    sig = np.sum(amps[:, None] * np.sin(2.0 * np.pi * freqs[:, None] * t[None, :] + phases[:, None]), axis=0)
    env_rate = rng.uniform(0.5, 3.0) / length
    env = 0.6 + 0.4 * np.sin(2.0 * np.pi * env_rate * t + rng.uniform(0.0, 2.0 * np.pi))
    gain = 10.0 ** (rng.uniform(-5.0, 5.0) / 20.0)
    sig = sig * env
    return gain * sig / np.sqrt(np.mean(sig * sig))


def make_sample(config: DatasetConfig, index: int, split: int = 0) -> MixtureSample:
    k_, n = config.n_sources, config.sample_length
    targets = np.stack([make_source(config.seed, split, index, k, k_, n) for k in range(k_)])
    mixture = np.sum(targets, axis=0)
    if config.noise == "noisy":
        noise = _rng(config.seed, split, index, k_).standard_normal(n)
        target_energy = np.sum(mixture * mixture) / 10.0 ** (config.noise_snr_db / 10.0)
        noise *= np.sqrt(target_energy / np.sum(noise * noise))
        mixture = mixture + noise
    return MixtureSample(index, mixture, targets)


def generate(config: DatasetConfig, split: int = 0) -> list[MixtureSample]:
    """The ordered dataset; ``split`` selects an independent stream (0 train, 1 valid)."""
    return [make_sample(config, j, split) for j in range(config.n_samples)]


def epoch_batches(dataset, batch_size: int, epoch: int, shuffle_seed: int | None = 0):
    """Batches of samples for one epoch, shuffled by ``(shuffle_seed, epoch)``.

    ``shuffle_seed=None`` keeps dataset order.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = np.arange(len(dataset))
    if shuffle_seed is not None:
        order = np.random.default_rng([int(shuffle_seed), int(epoch)]).permutation(len(dataset))
    return [[dataset[i] for i in order[s:s + batch_size]] for s in range(0, len(order), batch_size)]


def stack_batch(batch):
    ids = np.array([s.id for s in batch], dtype=np.int64)
    mix = np.stack([s.mixture for s in batch])
    tgt = np.stack([s.targets for s in batch])
    return ids, mix, tgt


# Export layout: <dir>/manifest.json plus one raw little-endian float32 file per
# signal, named <id>_<role>.f32 with role "mixture" or "source<k>".

def export_dataset(dataset, directory, config: DatasetConfig | None = None):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for s in dataset:
        signals = [("mixture", s.mixture)] + [(f"source{k}", t) for k, t in enumerate(s.targets)]
        for role, sig in signals:
            name = f"{s.id:06d}_{role}.f32"
            (directory / name).write_bytes(np.asarray(sig, dtype="<f4").tobytes())
            entries.append({"id": int(s.id), "role": role, "file": name, "length": int(len(sig))})
    manifest = {"dtype": "<f4", "config": config.to_dict() if config else None, "entries": entries}
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    return directory


def import_dataset(directory) -> list[MixtureSample]:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    by_id: dict[int, dict] = {}
    for e in manifest["entries"]:
        sig = np.frombuffer((directory / e["file"]).read_bytes(), dtype=manifest["dtype"])
        if sig.size != e["length"]:
            raise ValueError(f"{e['file']}: expected {e['length']} samples, found {sig.size}")
        by_id.setdefault(e["id"], {})[e["role"]] = sig.astype(np.float64)
    out = []
    for sid in sorted(by_id):
        roles = by_id[sid]
        k = sum(1 for r in roles if r.startswith("source"))
        out.append(MixtureSample(sid, roles["mixture"], np.stack([roles[f"source{i}"] for i in range(k)])))
    return out
