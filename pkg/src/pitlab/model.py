"""Toy time-domain masking separator with per-block reconstructions.

mixture -> frames -> relu(frames @ W_enc) = E
h_0 = E;  h_i = h_{i-1} + tanh(ctx_i @ A_i + a_i) * sigmoid(ctx_i @ G_i + g_i)
where ctx_i concatenates each frame's hidden state with its left and right
neighbours.  Every block output goes through the *same* mask head and decoder:

    mask_i = sigmoid(h_i @ W_mask + b_mask)            (K masks per frame)
    est_i  = overlap_add((mask_i * E) @ W_dec)
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from . import kernels


@dataclass
class SeparatorConfig:
    frame_size: int = 16
    hop: int = 8
    hidden_dim: int = 32
    n_blocks: int = 6
    n_sources: int = 2

    def __post_init__(self):
        if not 1 <= self.hop <= self.frame_size:
            raise ValueError("need 1 <= hop <= frame_size")
        if self.n_blocks < 1:
            raise ValueError("n_blocks must be >= 1")
        if self.n_sources < 2:
            raise ValueError("n_sources must be >= 2")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")

    def to_dict(self):
        return asdict(self)


def parameter_count(cfg: SeparatorConfig) -> int:
    f, h, k = cfg.frame_size, cfg.hidden_dim, cfg.n_sources
    per_block = 2 * (3 * h * h + h)
    return f * h + cfg.n_blocks * per_block + (h * k * h + k * h) + h * f


class SeparatorModel:
    def __init__(self, config: SeparatorConfig, seed: int = 0):
        self.config = config
        self.params: dict[str, ad.Tensor] = {}
        init(self, seed)

    def parameters(self):
        return list(self.params.values())

    def state_dict(self):
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state):
        for k, v in state.items():
            if k not in self.params or self.params[k].shape != np.shape(v):
                raise ValueError(f"checkpoint tensor {k!r} does not match the model")
            self.params[k].data = np.array(v, dtype=np.float64)

    def forward(self, mixtures, layers="all") -> ad.Tensor:
        return forward_batch(self, mixtures, layers)


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init(model: SeparatorModel, seed: int) -> SeparatorModel:
    """Uniform(+-1/sqrt(fan_in)) weights, zero biases; deterministic per seed."""
    cfg = model.config
    rng = np.random.default_rng(seed)
    f, h, k = cfg.frame_size, cfg.hidden_dim, cfg.n_sources
    p = {"encoder.weight": _uniform(rng, f, (f, h))}
    for i in range(cfg.n_blocks):
        p[f"block{i}.gate_w"] = _uniform(rng, 3 * h, (3 * h, h))
        p[f"block{i}.gate_b"] = np.zeros(h)
        p[f"block{i}.filter_w"] = _uniform(rng, 3 * h, (3 * h, h))
        p[f"block{i}.filter_b"] = np.zeros(h)
    p["mask.weight"] = _uniform(rng, h, (h, k * h))
    p["mask.bias"] = np.zeros(k * h)
    p["decoder.weight"] = _uniform(rng, h, (h, f))
    model.params = {name: ad.Tensor(v, requires_grad=True) for name, v in p.items()}
    return model


def _bias(b, shape):
    return ad.broadcast_to(b, shape)


def _context(h):
    """Concatenate each frame with its neighbours (zero at the edges)."""
    b, n, d = h.shape
    zero = np.zeros((b, 1, d))
    left = ad.concat([zero, h[:, :-1, :]], axis=1)
    right = ad.concat([h[:, 1:, :], zero], axis=1)
    return ad.concat([left, h, right], axis=2)


def encode(model, mixtures):
    cfg = model.config
    x = np.ascontiguousarray(np.atleast_2d(np.asarray(mixtures, dtype=np.float64)))
    length = x.shape[-1]
    if length < cfg.frame_size:
        raise ValueError(f"input of {length} samples is shorter than frame_size={cfg.frame_size}")
    n_frame = kernels.n_frames(length, cfg.frame_size, cfg.hop)
    frames = kernels.frame_signal(x, cfg.frame_size, cfg.hop, n_frame)
    return ad.relu(ad.matmul(ad.Tensor(frames), model.params["encoder.weight"])), length


def hidden_states(model, encoded):
    p = model.params
    h = encoded
    out = []
    for i in range(model.config.n_blocks):
        ctx = _context(h)
        shape = h.shape
        gate = ad.tanh(ad.add(ad.matmul(ctx, p[f"block{i}.gate_w"]), _bias(p[f"block{i}.gate_b"], shape)))
        filt = ad.sigmoid(ad.add(ad.matmul(ctx, p[f"block{i}.filter_w"]), _bias(p[f"block{i}.filter_b"], shape)))
        h = ad.add(h, ad.mul(gate, filt))
        out.append(h)
    return out


def reconstruct(model, hidden, encoded, length):
    """Shared mask head + decoder: hidden ``(L, B, F, H)`` -> estimates ``(L, B, K, T)``."""
    cfg = model.config
    p = model.params
    n_layer, b, n_frame, h = hidden.shape
    k = cfg.n_sources
    logits = ad.matmul(hidden, p["mask.weight"])
    masks = ad.sigmoid(ad.add(logits, _bias(p["mask.bias"], logits.shape)))
    masks = ad.reshape(masks, (n_layer, b, n_frame, k, h))
    enc = ad.broadcast_to(ad.reshape(encoded, (1, b, n_frame, 1, h)), masks.shape)
    frames = ad.matmul(ad.mul(masks, enc), p["decoder.weight"])
    frames = ad.transpose(frames, (0, 1, 3, 2, 4))
    return ad.overlap_add(frames, cfg.hop, length)


def forward_batch(model, mixtures, layers="all") -> ad.Tensor:
    """Per-layer estimates for a batch of mixtures, shape ``(L, B, K, T)``.

    ``layers`` is ``"all"``, ``"last"`` or a list of 0-based block indices.
    """
    encoded, length = encode(model, mixtures)
    hs = hidden_states(model, encoded)
    if layers == "all":
        chosen = hs
    elif layers == "last":
        chosen = hs[-1:]
    else:
        chosen = [hs[i] for i in layers]
    return reconstruct(model, ad.stack(chosen, axis=0), encoded, length)


def forward(mixture, model: SeparatorModel) -> list[np.ndarray]:
    """LayerOutputs for one mixture: a list over blocks of ``(K, T)`` arrays."""
    with ad.no_grad():
        out = forward_batch(model, np.asarray(mixture, dtype=np.float64)[None, :])
    return [out.data[i, 0] for i in range(out.shape[0])]
