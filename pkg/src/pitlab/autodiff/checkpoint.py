"""Parameter checkpoints: one flat binary blob plus a JSON shape manifest.

Layout of a checkpoint directory::

    params.bin    all tensors, little-endian float64, concatenated in manifest order
    params.json   {"format": "pitlab-tensors", "version": 1, "dtype": "<f8",
                   "tensors": [{"name", "shape", "offset", "count"}, ...]}

``offset`` and ``count`` are in elements, not bytes.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT = "pitlab-tensors"
VERSION = 1


def save_tensors(directory, named_arrays):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries, blobs, offset = [], [], 0
    for name, arr in named_arrays.items():
        a = np.array(arr, dtype="<f8", order="C")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset, "count": int(a.size)})
        blobs.append(a.reshape(-1))
        offset += a.size
    flat = np.concatenate(blobs) if blobs else np.zeros(0, dtype="<f8")
    (directory / "params.bin").write_bytes(flat.astype("<f8").tobytes())
    manifest = {"format": FORMAT, "version": VERSION, "dtype": "<f8", "tensors": entries}
    (directory / "params.json").write_text(json.dumps(manifest, indent=1) + "\n")


def load_tensors(directory) -> dict:
    directory = Path(directory)
    manifest = json.loads((directory / "params.json").read_text())
    if manifest.get("format") != FORMAT:
        raise ValueError(f"{directory}: not a {FORMAT} checkpoint")
    flat = np.frombuffer((directory / "params.bin").read_bytes(), dtype=manifest["dtype"])
    out = {}
    for e in manifest["tensors"]:
        chunk = flat[e["offset"]:e["offset"] + e["count"]]
        out[e["name"]] = chunk.astype(np.float64).reshape(e["shape"])
    return out
