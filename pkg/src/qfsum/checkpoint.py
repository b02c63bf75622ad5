"""Binary model checkpoints.

Layout: magic ``QFSB``, little-endian u32 format version, u32-length-
prefixed UTF-8 config JSON, then one record per tensor: u32-prefixed
name, u32 rank, u64 dims, and float32 little-endian row-major values.
Values are stored in 32-bit; the in-memory model stays 64-bit, so a
save/load/save round trip is byte-identical.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .model import ModelConfig, ModelParams, parameter_specs

MAGIC = b"QFSB"
VERSION = 1


class CheckpointError(ValueError):
    """Raised for malformed or incompatible checkpoint files."""


def save_checkpoint(path: str | Path, params: ModelParams) -> None:
    chunks: list[bytes] = [MAGIC, struct.pack("<I", VERSION)]
    config_bytes = params.config.to_json().encode("utf-8")
    chunks.append(struct.pack("<I", len(config_bytes)))
    chunks.append(config_bytes)
    for name, t in params.items():
        name_bytes = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(name_bytes)))
        chunks.append(name_bytes)
        arr = np.ascontiguousarray(t.data)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(arr.astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64s(self, count: int) -> tuple[int, ...]:
        return struct.unpack(f"<{count}Q", self.take(8 * count))

    def done(self) -> bool:
        return self.pos == len(self.blob)


def load_checkpoint(path: str | Path) -> ModelParams:
    blob = Path(path).read_bytes()
    r = _Reader(blob, path)
    if r.take(4) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version = r.u32()
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    config = ModelConfig.from_json(r.take(r.u32()).decode("utf-8"))
    tensors: dict[str, Tensor] = {}
    while not r.done():
        name = r.take(r.u32()).decode("utf-8")
        rank = r.u32()
        dims = r.u64s(rank)
        count = int(np.prod(dims)) if rank else 1
        values = np.frombuffer(r.take(4 * count), dtype="<f4").astype(np.float64)
        if name in tensors:
            raise CheckpointError(f"{path}: duplicate tensor {name!r}")
        tensors[name] = Tensor(values.reshape(dims), name=name)
    expected = [(name, shape) for name, shape, _ in parameter_specs(config)]
    got = [(name, t.data.shape) for name, t in tensors.items()]
    if got != expected:
        raise CheckpointError(f"{path}: tensors do not match the config architecture")
    return ModelParams(config, tensors)
