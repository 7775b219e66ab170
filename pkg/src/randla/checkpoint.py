"""Named-tensor checkpoint container.

Binary layout: 4-byte magic ``NTCK``, one version byte, a little-endian
uint32 tensor count, then per tensor: uint16 name length, UTF-8 name, uint8
rank, rank little-endian uint32 dims, and the little-endian float64 payload.
Model checkpoints store the architecture hyperparameters as reserved
``__cfg__``-prefixed tensors alongside the weights.
"""

from __future__ import annotations

import struct
from typing import Dict

import numpy as np

from .network import LOCSE_MODES, POOLING_MODES, ModelParams, NetworkConfig
from .numeric import Tensor

__all__ = ["save_tensors", "load_tensors", "save_model", "load_model", "MAGIC", "VERSION"]

MAGIC = b"NTCK"
VERSION = 1

_LOCSE_CODES = list(LOCSE_MODES)


def save_tensors(path: str, tensors: Dict[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([VERSION]))
        fh.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            arr = np.asarray(tensors[name], dtype="<f8", order="C")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(bytes([arr.ndim]))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(arr.tobytes())


def load_tensors(path: str) -> Dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: bad checkpoint magic {raw[:4]!r}")
    if raw[4] != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {raw[4]}")
    (count,) = struct.unpack_from("<I", raw, 5)
    pos = 9
    out: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        name = raw[pos:pos + name_len].decode("utf-8")
        pos += name_len
        rank = raw[pos]
        pos += 1
        dims = struct.unpack_from(f"<{rank}I", raw, pos) if rank else ()
        pos += 4 * rank
        size = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(raw, dtype="<f8", count=size, offset=pos).reshape(dims)
        pos += 8 * size
        out[name] = arr.astype(np.float64)
    if pos != len(raw):
        raise ValueError(f"{path}: {len(raw) - pos} trailing bytes after last tensor")
    return out


def save_model(path: str, params: ModelParams) -> None:
    cfg = params.config
    blob: Dict[str, np.ndarray] = {name: t.data for name, t in params.named()}
    blob["__cfg__.n_class"] = np.float64(cfg.n_class)
    blob["__cfg__.d_in"] = np.float64(cfg.d_in)
    blob["__cfg__.k"] = np.float64(cfg.k)
    blob["__cfg__.block_depth"] = np.float64(cfg.block_depth)
    blob["__cfg__.dropout"] = np.float64(cfg.dropout)
    blob["__cfg__.coord_scale"] = np.float64(cfg.coord_scale)
    blob["__cfg__.locse_mode"] = np.float64(_LOCSE_CODES.index(cfg.locse_mode))
    blob["__cfg__.pooling"] = np.float64(POOLING_MODES.index(cfg.pooling))
    blob["__cfg__.channels"] = np.asarray(cfg.channels, dtype=np.float64)
    blob["__cfg__.head_widths"] = np.asarray(cfg.head_widths, dtype=np.float64)
    save_tensors(path, blob)


def load_model(path: str) -> ModelParams:
    blob = load_tensors(path)
    cfg = NetworkConfig(
        n_class=int(blob["__cfg__.n_class"]),
        d_in=int(blob["__cfg__.d_in"]),
        k=int(blob["__cfg__.k"]),
        channels=tuple(int(v) for v in blob["__cfg__.channels"]),
        block_depth=int(blob["__cfg__.block_depth"]),
        locse_mode=_LOCSE_CODES[int(blob["__cfg__.locse_mode"])],
        pooling=POOLING_MODES[int(blob["__cfg__.pooling"])],
        dropout=float(blob["__cfg__.dropout"]),
        head_widths=tuple(int(v) for v in blob["__cfg__.head_widths"]),
        coord_scale=float(blob["__cfg__.coord_scale"]),
    )
    tensors = {name: Tensor(arr, requires_grad=True)
               for name, arr in blob.items() if not name.startswith("__cfg__.")}
    return ModelParams(cfg, tensors)
