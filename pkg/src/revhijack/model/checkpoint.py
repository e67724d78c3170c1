"""Binary checkpoint container.

Layout (all integers little-endian)::

    8 bytes   magic  b"RHJCKPT\\0"
    4 bytes   uint32 format version (currently 1)
    8 bytes   uint64 header length H
    H bytes   UTF-8 JSON header (sorted keys): config, vocabulary tokens, Adam
              step, optional run metadata, and a tensor table of
              {name, dtype "<f8", shape, offset, nbytes}
    ...       raw tensor bytes, C order, float64 little-endian; offsets are
              relative to the first byte after the header

Tensors are the model weights followed by the Adam first/second moments
(``adam.m/<name>``, ``adam.v/<name>``), so a loaded checkpoint can resume
training exactly.
"""
from __future__ import annotations

import json
import struct

import numpy as np

from .._io import atomic_write
from ..textprep import Vocabulary
from .twin import TwinConfig, TwinParameters

MAGIC = b"RHJCKPT\x00"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, params: TwinParameters, meta: dict | None = None) -> None:
    tensors = []
    for name, w in params.weights.items():
        tensors.append((name, w))
    for name in params.weights:
        tensors.append((f"adam.m/{name}", params.m[name]))
        tensors.append((f"adam.v/{name}", params.v[name]))
    table, blobs, offset = [], [], 0
    for name, w in tensors:
        raw = np.ascontiguousarray(w, dtype="<f8").tobytes()
        table.append({"name": name, "dtype": "<f8", "shape": list(w.shape), "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = {
        "format": "revhijack-checkpoint",
        "version": VERSION,
        "config": params.config.to_json(),
        "vocab": params.vocab.to_json(),
        "step": params.step,
        "tensors": table,
    }
    if meta is not None:
        header["meta"] = meta
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with atomic_write(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(head)))
        fh.write(head)
        for raw in blobs:
            fh.write(raw)


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        return _read_header(fh)


def _read_header(fh) -> dict:
    if fh.read(8) != MAGIC:
        raise CheckpointError("not a revhijack checkpoint")
    version, hlen = struct.unpack("<IQ", fh.read(12))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    return json.loads(fh.read(hlen).decode("utf-8"))


def load_checkpoint(path) -> TwinParameters:
    with open(path, "rb") as fh:
        header = _read_header(fh)
        body = fh.read()
    arrays = {}
    for t in header["tensors"]:
        raw = body[t["offset"]:t["offset"] + t["nbytes"]]
        if len(raw) != t["nbytes"]:
            raise CheckpointError(f"truncated tensor {t['name']}")
        arrays[t["name"]] = np.frombuffer(raw, dtype=t["dtype"]).reshape(t["shape"]).astype(np.float64)
    weights = {k: v for k, v in arrays.items() if not k.startswith("adam.")}
    m = {k[len("adam.m/"):]: v for k, v in arrays.items() if k.startswith("adam.m/")}
    v = {k[len("adam.v/"):]: v for k, v in arrays.items() if k.startswith("adam.v/")}
    return TwinParameters(
        TwinConfig.from_json(header["config"]),
        Vocabulary.from_json(header["vocab"]),
        weights,
        m,
        v,
        int(header["step"]),
    )
