"""Checkpoint container: a named array table plus config text.

Binary layout (little-endian): magic ``CKPT``, u32 version (=1), u32 epoch,
u32 config byte length, UTF-8 config text (key = value lines), u32 entry
count, then per entry: u16 name length, UTF-8 name, u8 ndim, u32 dims,
float32 data. Model parameters are stored under ``param.``, normalization
buffers under ``buffer.``, optimizer state under ``adam.``.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, NonFiniteDataError, TruncatedPayloadError

CKPT_MAGIC = b"CKPT"
CKPT_VERSION = 1


def save_checkpoint(path, arrays: dict[str, np.ndarray], epoch: int, config_text: str) -> None:
    config_bytes = config_text.encode("utf-8")
    parts = [
        CKPT_MAGIC,
        struct.pack("<III", CKPT_VERSION, epoch, len(config_bytes)),
        config_bytes,
        struct.pack("<I", len(arrays)),
    ]
    for name, value in arrays.items():
        arr = np.asarray(value, dtype=np.float64)
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, raw: bytes, label: str):
        self.raw = raw
        self.pos = 0
        self.label = label

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.raw):
            raise TruncatedPayloadError(f"{self.label}: file ends inside a record")
        piece = self.raw[self.pos:self.pos + count]
        self.pos += count
        return piece

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], int, str]:
    """Read a checkpoint; returns (arrays as float64, epoch, config text)."""
    reader = _Reader(Path(path).read_bytes(), str(path))
    if reader.take(4) != CKPT_MAGIC:
        raise FormatError(f"{path}: bad magic")
    version, epoch, config_len = reader.unpack("<III")
    if version != CKPT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    config_text = reader.take(config_len).decode("utf-8")
    (count,) = reader.unpack("<I")
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (ndim,) = reader.unpack("<B")
        shape = reader.unpack(f"<{ndim}I") if ndim else ()
        size = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(reader.take(size * 4), dtype="<f4").astype(np.float64)
        arrays[name] = data.reshape(shape)
    if reader.pos != len(reader.raw):
        raise FormatError(f"{path}: {len(reader.raw) - reader.pos} trailing bytes")
    for name, arr in arrays.items():
        if not np.all(np.isfinite(arr)):
            raise NonFiniteDataError(f"{path}: entry {name!r} has non-finite values")
    return arrays, epoch, config_text
