"""Single-file parameter checkpoints.

Layout::

    b"LMPNNCK1"                 8-byte magic
    uint64 little-endian        manifest length in bytes
    manifest                    UTF-8 JSON
    payload                     little-endian float64 arrays, back to back

The manifest lists every array as ``{"name", "shape", "offset", "count"}``
(offset and count in float64 elements) under ``"arrays"``, and carries free
metadata under ``"meta"`` (configs, gamma values, Adam step, target scaler).
Adam moments are stored as arrays named ``adam.m/<param>`` and ``adam.v/<param>``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .optim import AdamState

MAGIC = b"LMPNNCK1"
LE_F64 = np.dtype("<f8")


def save_checkpoint(path, params: dict, meta: dict | None = None, adam: AdamState | None = None) -> None:
    arrays = dict(params)
    meta = dict(meta or {})
    if adam is not None:
        meta["adam"] = {"step": adam.step, "beta1": adam.beta1, "beta2": adam.beta2, "epsilon": adam.epsilon}
        for name, m in adam.first_moment.items():
            arrays[f"adam.m/{name}"] = m
            arrays[f"adam.v/{name}"] = adam.second_moment[name]
    entries, chunks, offset = [], [], 0
    for name, value in arrays.items():
        a = np.array(value, dtype=LE_F64, order="C")  # keeps 0-d shapes, unlike ascontiguousarray
        entries.append({"name": name, "shape": list(a.shape), "offset": offset, "count": int(a.size)})
        chunks.append(a.tobytes())
        offset += a.size
    manifest = json.dumps({"version": 1, "arrays": entries, "meta": meta}).encode("utf-8")
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(manifest)))
        fh.write(manifest)
        for c in chunks:
            fh.write(c)
    tmp.replace(path)


def load_checkpoint(path):
    """Return ``(params, meta, adam_state_or_None)``."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (n,) = struct.unpack("<Q", raw[8:16])
    manifest = json.loads(raw[16:16 + n].decode("utf-8"))
    payload = np.frombuffer(raw, dtype=LE_F64, offset=16 + n)
    arrays = {}
    for e in manifest["arrays"]:
        arrays[e["name"]] = payload[e["offset"]:e["offset"] + e["count"]].reshape(e["shape"]).astype(np.float64)
    meta = manifest["meta"]
    params = {k: v for k, v in arrays.items() if not k.startswith("adam.")}
    adam = None
    if "adam" in meta:
        a = meta["adam"]
        adam = AdamState(a["step"], {}, {}, a["beta1"], a["beta2"], a["epsilon"])
        for k, v in arrays.items():
            if k.startswith("adam.m/"):
                adam.first_moment[k[7:]] = v
            elif k.startswith("adam.v/"):
                adam.second_moment[k[7:]] = v
    return params, meta, adam
