"""Mesh sequences, region masks, and their file formats.

A 4D face clip is a sequence of mesh frames sharing one vertex order.
Only vertex positions are animated; connectivity is out of scope.

Formats owned by this module (both little-endian):

* MSEQ container: magic ``MSEQ``, u32 version (=1), u32 frame count T,
  u32 vertex count N, f32 frames-per-second, then T*N*3 float32 values,
  frame-major, vertex-major within a frame, xyz within a vertex.
* Region mask sidecar (UTF-8 text): one mask per line, formatted
  ``name: i0,i1,i2,...`` with ascending vertex indices.

Positions are stored as float32 on disk; statistics are accumulated in
float64 in memory.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    FormatError,
    InsufficientFramesError,
    MaskError,
    NonFiniteDataError,
    TruncatedPayloadError,
)

MSEQ_MAGIC = b"MSEQ"
MSEQ_VERSION = 1
_HEADER = struct.Struct("<4sIIIf")


def _as_float64(values, name):
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteDataError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True, eq=False)
class TemplateMesh:
    """Neutral face of one identity: (N, 3) vertex positions."""

    vertices: np.ndarray

    def __post_init__(self):
        arr = _as_float64(self.vertices, "template vertices")
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise ValueError(f"template must be (N, 3), got {arr.shape}")
        if arr.shape[0] < 4:
            raise ValueError("template needs at least 4 vertices")
        object.__setattr__(self, "vertices", arr)

    @property
    def vertex_count(self) -> int:
        return self.vertices.shape[0]


@dataclass(frozen=True, eq=False)
class MeshSequence:
    """An animated clip: (T, N, 3) vertex positions at a fixed frame rate."""

    frames: np.ndarray
    fps: float

    def __post_init__(self):
        arr = _as_float64(self.frames, "mesh frames")
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"frames must be (T, N, 3), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("sequence needs at least one frame and one vertex")
        if not (np.isfinite(self.fps) and self.fps > 0):
            raise ValueError(f"fps must be positive and finite, got {self.fps}")
        object.__setattr__(self, "frames", arr)
        object.__setattr__(self, "fps", float(self.fps))

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]

    @property
    def vertex_count(self) -> int:
        return self.frames.shape[1]

    @property
    def duration(self) -> float:
        return self.frame_count / self.fps


@dataclass(frozen=True, eq=False)
class NormalizedSequence:
    """Mesh frames with the per-vertex temporal mean removed."""

    frames: np.ndarray

    def __post_init__(self):
        arr = _as_float64(self.frames, "normalized frames")
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"frames must be (T, N, 3), got {arr.shape}")
        scale = max(1.0, float(np.abs(arr).max(initial=0.0)))
        residual = float(np.abs(arr.mean(axis=0)).max(initial=0.0))
        if residual > 1e-6 * scale:
            raise ValueError("per-vertex temporal mean is not zero")
        object.__setattr__(self, "frames", arr)

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]

    @property
    def vertex_count(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True, eq=False)
class RegionMask:
    """A named set of vertex indices, stored sorted ascending."""

    name: str
    indices: np.ndarray

    def __post_init__(self):
        if not self.name or ":" in self.name:
            raise MaskError(f"bad mask name {self.name!r}")
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1 or idx.size == 0:
            raise MaskError(f"mask {self.name!r} must be a non-empty index vector")
        if idx.min() < 0:
            raise MaskError(f"mask {self.name!r} has negative indices")
        if np.unique(idx).size != idx.size:
            raise MaskError(f"mask {self.name!r} has duplicate indices")
        object.__setattr__(self, "indices", np.sort(idx))

    @property
    def size(self) -> int:
        return self.indices.size

    def check_bounds(self, vertex_count: int) -> None:
        if self.indices[-1] >= vertex_count:
            raise MaskError(
                f"mask {self.name!r} indexes vertex {int(self.indices[-1])} "
                f"but the mesh has {vertex_count} vertices"
            )


@dataclass(frozen=True, eq=False)
class VertexStats:
    """Per-vertex temporal standard deviation, shape (N, 3)."""

    per_vertex_std: np.ndarray

    def __post_init__(self):
        arr = _as_float64(self.per_vertex_std, "vertex stats")
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise ValueError(f"stats must be (N, 3), got {arr.shape}")
        object.__setattr__(self, "per_vertex_std", arr)


def write_mesh_sequence(path, seq: MeshSequence) -> None:
    """Serialize a sequence to the MSEQ container (float32 payload)."""
    t, n = seq.frame_count, seq.vertex_count
    header = _HEADER.pack(MSEQ_MAGIC, MSEQ_VERSION, t, n, float(seq.fps))
    payload = np.ascontiguousarray(seq.frames, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def load_mesh_sequence(path) -> MeshSequence:
    """Read an MSEQ container, validating header, length, and payload."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: header too short ({len(raw)} bytes)")
    magic, version, t, n, fps = _HEADER.unpack_from(raw)
    if magic != MSEQ_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != MSEQ_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if t < 1 or n < 1:
        raise FormatError(f"{path}: invalid dimensions T={t} N={n}")
    if not (np.isfinite(fps) and fps > 0):
        raise FormatError(f"{path}: invalid fps {fps}")
    expected = t * n * 3 * 4
    body = raw[_HEADER.size:]
    if len(body) < expected:
        raise TruncatedPayloadError(
            f"{path}: payload has {len(body)} bytes, header declares {expected}"
        )
    if len(body) > expected:
        raise FormatError(f"{path}: {len(body) - expected} trailing bytes")
    frames = np.frombuffer(body, dtype="<f4").astype(np.float64).reshape(t, n, 3)
    if not np.all(np.isfinite(frames)):
        raise NonFiniteDataError(f"{path}: payload contains non-finite values")
    return MeshSequence(frames=frames, fps=float(fps))


def normalize_sequence(seq: MeshSequence) -> tuple[NormalizedSequence, np.ndarray]:
    """Split a clip into zero-mean motion and its mean face.

    Returns (normalized, mean_face) where mean_face is the (N, 3)
    per-vertex temporal mean and normalized.frames + mean_face
    reconstructs the input.
    """
    mean_face = seq.frames.mean(axis=0)
    return NormalizedSequence(frames=seq.frames - mean_face), mean_face


def per_vertex_temporal_std(seq: MeshSequence) -> VertexStats:
    """Population standard deviation of each vertex coordinate over time.

    Requires at least two frames; a single frame has no temporal spread.
    """
    if seq.frame_count < 2:
        raise InsufficientFramesError(
            f"need at least 2 frames for temporal statistics, got {seq.frame_count}"
        )
    return VertexStats(per_vertex_std=seq.frames.std(axis=0))


def write_region_masks(path, masks) -> None:
    """Write masks as ``name: i0,i1,...`` lines with ascending indices."""
    lines = []
    for mask in masks:
        lines.append(f"{mask.name}: " + ",".join(str(int(i)) for i in mask.indices))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_region_masks(path) -> dict[str, RegionMask]:
    """Parse a mask sidecar file into a name -> RegionMask mapping."""
    masks: dict[str, RegionMask] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        name, sep, rest = line.partition(":")
        if not sep:
            raise FormatError(f"{path}:{lineno}: expected 'name: indices'")
        name = name.strip()
        try:
            indices = [int(tok) for tok in rest.strip().split(",") if tok.strip()]
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: bad index list") from exc
        if not indices:
            raise FormatError(f"{path}:{lineno}: empty index list")
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise FormatError(f"{path}:{lineno}: indices must be strictly ascending")
        if name in masks:
            raise FormatError(f"{path}:{lineno}: duplicate mask {name!r}")
        masks[name] = RegionMask(name=name, indices=np.asarray(indices))
    return masks
