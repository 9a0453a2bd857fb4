"""Serialize graphs and basis expansions as JSON or a flat binary file.

Binary layout (all integers little-endian uint64, all data float64 LE)::

    b"LMPNNFT1"
    num_records
    per record:
        id length, id (UTF-8 bytes)
        num_arrays
        per array:
            name length, name (UTF-8 bytes)
            ndim, dims...
            payload: prod(dims) float64 values, row-major

Index arrays (edge endpoints, angle edge pairs, atomic numbers) are stored
as float64 like everything else; they are exact integers below 2**53.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Iterable

import numpy as np

from .basis import AngularBasisConfig, RadialBasisConfig
from .graph import MolecularGraph

MAGIC = b"LMPNNFT1"
ARRAYS = ("node_z", "positions", "edge_src", "edge_dst", "edge_dist",
          "angle_edge_a", "angle_edge_b", "angle_cos", "radial", "angular")


def graph_arrays(graph: MolecularGraph, radial: RadialBasisConfig, angular: AngularBasisConfig) -> dict:
    rbf, abf = graph.expansions(radial, angular)
    out = {name: getattr(graph, name) for name in ARRAYS[:8]}
    out["radial"], out["angular"] = rbf, abf
    return out


def _u64(n: int) -> bytes:
    return struct.pack("<Q", n)


def write_binary(path, records: Iterable[tuple[str, dict]]) -> int:
    """Write ``(id, {name: array})`` records; returns the record count."""
    records = list(records)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_u64(len(records)))
        for rid, arrays in records:
            raw = rid.encode("utf-8")
            fh.write(_u64(len(raw)) + raw)
            fh.write(_u64(len(arrays)))
            for name, value in arrays.items():
                a = np.array(value, dtype="<f8", order="C")
                raw = name.encode("utf-8")
                fh.write(_u64(len(raw)) + raw)
                fh.write(_u64(a.ndim) + b"".join(_u64(d) for d in a.shape))
                fh.write(a.tobytes())
    return len(records)


def read_binary(path) -> list[tuple[str, dict]]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path}: not a feature file")
    pos = 8

    def u64():
        nonlocal pos
        (v,) = struct.unpack_from("<Q", raw, pos)
        pos += 8
        return v

    def text():
        nonlocal pos
        n = u64()
        s = raw[pos:pos + n].decode("utf-8")
        pos += n
        return s

    records = []
    for _ in range(u64()):
        rid = text()
        arrays = {}
        for _ in range(u64()):
            name = text()
            shape = tuple(u64() for _ in range(u64()))
            count = int(np.prod(shape, dtype=np.int64))
            arrays[name] = np.frombuffer(raw, dtype="<f8", count=count, offset=pos).reshape(shape).astype(np.float64)
            pos += 8 * count
        records.append((rid, arrays))
    return records


def write_json(path, records: Iterable[tuple[str, dict]]) -> int:
    records = list(records)
    payload = [{"id": rid, **{k: v if isinstance(v, dict) else np.asarray(v).tolist() for k, v in arrays.items()}}
               for rid, arrays in records]
    Path(path).write_text(json.dumps(payload))
    return len(records)
