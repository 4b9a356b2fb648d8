"""Versioned binary checkpoints.

Layout (all integers little-endian uint32)::

    b"IMVALIGN-CKPT"  version
    config_len  config_json_utf8
    n_tensors
    n_tensors x ( name_len name_utf8 rank dim_0 .. dim_{rank-1} float32_le[prod(dims)] )

Model parameters keep their own names; optimiser state is stored under the
``optim.`` prefix so a resumed run continues the same trajectory.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import ModelConfig, Transducer
from .params import ParameterStore

MAGIC = b"IMVALIGN-CKPT"
VERSION = 1
OPTIM_PREFIX = "optim."


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: ModelConfig
    meta: dict = field(default_factory=dict)
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def params(self) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.tensors.items() if not k.startswith(OPTIM_PREFIX)}

    def optimizer_state(self) -> dict[str, np.ndarray]:
        n = len(OPTIM_PREFIX)
        return {k[n:]: v for k, v in self.tensors.items() if k.startswith(OPTIM_PREFIX)}


def _u32(n: int) -> bytes:
    return struct.pack("<I", n)


def encode(ckpt: Checkpoint) -> bytes:
    header = json.dumps({"model": ckpt.config.to_dict(), "meta": ckpt.meta}, sort_keys=True).encode()
    chunks = [MAGIC, _u32(VERSION), _u32(len(header)), header, _u32(len(ckpt.tensors))]
    for name, arr in ckpt.tensors.items():
        raw = name.encode()
        arr = np.asarray(arr)
        chunks += [_u32(len(raw)), raw, _u32(arr.ndim)]
        chunks += [_u32(d) for d in arr.shape]
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"truncated checkpoint: wanted {n} bytes at offset {self.pos}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def decode(buf: bytes) -> Checkpoint:
    r = _Reader(buf)
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version = r.u32()
    if version != VERSION:
        raise CheckpointError(f"checkpoint version {version} unsupported (expected {VERSION})")
    try:
        header = json.loads(r.take(r.u32()).decode())
        config = ModelConfig.from_dict(header["model"])
    except (ValueError, KeyError, TypeError) as err:
        raise CheckpointError(f"unreadable config block: {err}") from None
    tensors: dict[str, np.ndarray] = {}
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode()
        dims = tuple(r.u32() for _ in range(r.u32()))
        count = int(np.prod(dims, dtype=np.int64))
        tensors[name] = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(dims).astype(np.float32)
    if r.pos != len(buf):
        raise CheckpointError(f"{len(buf) - r.pos} trailing bytes after the last tensor")
    return Checkpoint(config, header.get("meta", {}), tensors)


def save_checkpoint(path, model: Transducer, optimizer=None, meta: dict | None = None) -> None:
    tensors = {name: p.data for name, p in model.params.items()}
    if optimizer is not None:
        tensors.update({OPTIM_PREFIX + k: v for k, v in optimizer.state().items()})
    meta = dict(meta or {})
    if optimizer is not None:
        meta.setdefault("optimizer", optimizer.kind)
        meta.setdefault("lr", optimizer.lr)
    Path(path).write_bytes(encode(Checkpoint(model.cfg, meta, tensors)))


def read_checkpoint(path) -> Checkpoint:
    try:
        buf = Path(path).read_bytes()
    except OSError as err:
        raise CheckpointError(f"cannot read checkpoint {path}: {err.strerror}") from None
    return decode(buf)


def model_from_checkpoint(ckpt: Checkpoint) -> Transducer:
    fresh = Transducer(ckpt.config, seed=0)
    store = ParameterStore(dtype=ckpt.config.dtype)
    saved = ckpt.params()
    for name, p in fresh.params.items():
        if name not in saved:
            raise CheckpointError(f"checkpoint lacks parameter {name!r}")
        if saved[name].shape != p.shape:
            raise CheckpointError(f"parameter {name!r}: checkpoint shape {saved[name].shape}, model {p.shape}")
        store.add(name, saved[name], trainable=p.trainable)
    extra = set(saved) - set(fresh.params)
    if extra:
        raise CheckpointError(f"checkpoint has unknown parameters: {sorted(extra)[:3]}")
    return Transducer(ckpt.config, params=store)


def load_model(path) -> Transducer:
    return model_from_checkpoint(read_checkpoint(path))
