"""Procedural synthetic corpus: articulated face clips with known structure.

Each corpus has one shared template face partitioned into four contiguous
vertex regions (lip, jaw, upper, brow) and a handful of identities that
"speak" the same sentences with different personal style:

* A sentence is a piecewise-constant track over P pseudo-phonemes.
* Lip and jaw vertices deform by exactly amplitude * basis[track[t]]:
  a per-phoneme deformation basis scaled by the identity's amplitude.
  Articulation strength is a pure style factor and lip/jaw displacement
  magnitudes stay strongly correlated by construction.
* Upper-face and brow vertices ride independent smooth noise envelopes
  scaled by the identity's upper energy; they carry no speech content.
* Driving features are the one-hot phoneme track convolved with a short
  smoothing kernel plus Gaussian noise, emitted at the mesh frame rate.
  The kernel's center tap outweighs both flanks combined, so the noisy
  features still identify the active phoneme at every single frame and
  near-zero lip error stays reachable for a strong enough model.

Everything derives deterministically from the spec seed, so a corpus can
be regenerated byte-for-byte.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import FeatureSequence, write_features
from .mesh import (
    MeshSequence,
    RegionMask,
    TemplateMesh,
    write_mesh_sequence,
    write_region_masks,
)

REGION_NAMES = ("lip", "jaw", "upper", "brow")
_REGION_FRACTIONS = (0.27, 0.27, 0.33, 0.13)

# Stream tags for per-purpose deterministic RNGs.
_TEMPLATE, _BASIS, _TRACK, _FEATURES, _UPPER, _BROW = range(6)


@dataclass(frozen=True)
class SynthSpec:
    """Knobs of the generator; defaults give the standard training corpus."""

    vertex_count: int = 150
    phonemes: int = 8
    identities: int = 6
    sentences: int = 32
    fps: float = 30.0
    seed: int = 0
    frame_range: tuple = (60, 100)
    segment_range: tuple = (6, 14)
    motion_scale: float = 0.1
    shape_jitter: float = 0.2
    feature_noise: float = 0.1
    smooth_kernel: tuple = (0.2, 0.6, 0.2)
    amplitudes: tuple = (0.6, 0.8, 1.0, 1.2, 1.6, 2.0)
    upper_energies: tuple = (0.05, 0.10, 0.075, 0.125, 0.06, 0.09)

    def __post_init__(self):
        if self.vertex_count < 16:
            raise ValueError("need at least 16 vertices to partition into regions")
        if self.phonemes < 2 or self.identities < 1 or self.sentences < 1:
            raise ValueError("invalid corpus dimensions")
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        object.__setattr__(self, "frame_range", tuple(self.frame_range))
        object.__setattr__(self, "segment_range", tuple(self.segment_range))
        object.__setattr__(self, "smooth_kernel", tuple(self.smooth_kernel))
        object.__setattr__(self, "amplitudes", tuple(self.amplitudes))
        object.__setattr__(self, "upper_energies", tuple(self.upper_energies))

    def amplitude(self, identity: int) -> float:
        return self.amplitudes[identity % len(self.amplitudes)]

    def upper_energy(self, identity: int) -> float:
        return self.upper_energies[identity % len(self.upper_energies)]


def _rng(spec: SynthSpec, *stream) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([spec.seed, *stream]))


def region_masks(spec: SynthSpec) -> dict[str, RegionMask]:
    """Partition [0, N) into contiguous lip/jaw/upper/brow index ranges."""
    n = spec.vertex_count
    sizes = [int(n * f) for f in _REGION_FRACTIONS]
    sizes[2] += n - sum(sizes)  # remainder goes to the large upper region
    masks = {}
    start = 0
    for name, size in zip(REGION_NAMES, sizes):
        masks[name] = RegionMask(name=name, indices=np.arange(start, start + size))
        start += size
    return masks


def gen_template(spec: SynthSpec) -> tuple[TemplateMesh, dict[str, RegionMask]]:
    """A deterministic ellipsoidal vertex cloud plus its region partition."""
    rng = _rng(spec, _TEMPLATE)
    directions = rng.normal(size=(spec.vertex_count, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = np.array([1.0, 1.3, 0.9])
    jitter = 1.0 + 0.05 * rng.normal(size=(spec.vertex_count, 1))
    return TemplateMesh(vertices=directions * radii * jitter), region_masks(spec)


@dataclass(frozen=True)
class MotionBasis:
    """Deterministic deformation fields shared by every identity."""

    lipjaw_field: np.ndarray     # (|lip| + |jaw|, 3) direction field
    phoneme_gains: np.ndarray    # (P,) scalar gain per phoneme
    phoneme_shapes: np.ndarray   # (P, |lip| + |jaw|, 3) residual shapes
    upper_field: np.ndarray      # (|upper|, 3)
    brow_field: np.ndarray       # (|brow|, 3)

    def lipjaw_offsets(self) -> np.ndarray:
        """(P, |lip|+|jaw|, 3) per-phoneme displacement of lip+jaw vertices."""
        return self.phoneme_gains[:, None, None] * self.lipjaw_field + self.phoneme_shapes


def motion_basis(spec: SynthSpec, masks: dict[str, RegionMask]) -> MotionBasis:
    rng = _rng(spec, _BASIS)
    n_lipjaw = masks["lip"].size + masks["jaw"].size
    scale = spec.motion_scale

    def unit_field(count):
        vecs = rng.normal(size=(count, 3))
        return vecs / np.linalg.norm(vecs, axis=1, keepdims=True)

    lipjaw_field = scale * unit_field(n_lipjaw)
    gains = rng.uniform(0.5, 1.5, size=spec.phonemes)
    shapes = spec.shape_jitter * scale * rng.normal(size=(spec.phonemes, n_lipjaw, 3)) / np.sqrt(3)
    upper_field = scale * unit_field(masks["upper"].size)
    brow_field = scale * unit_field(masks["brow"].size)
    return MotionBasis(
        lipjaw_field=lipjaw_field,
        phoneme_gains=gains,
        phoneme_shapes=shapes,
        upper_field=upper_field,
        brow_field=brow_field,
    )


def phoneme_track(spec: SynthSpec, sentence: int) -> np.ndarray:
    """Piecewise-constant phoneme ids for one sentence; identity-independent."""
    rng = _rng(spec, _TRACK, sentence)
    total = int(rng.integers(spec.frame_range[0], spec.frame_range[1] + 1))
    track = np.empty(total, dtype=np.int64)
    t = 0
    while t < total:
        duration = int(rng.integers(spec.segment_range[0], spec.segment_range[1] + 1))
        track[t:t + duration] = int(rng.integers(spec.phonemes))
        t += duration
    return track


def _smooth_envelope(rng: np.random.Generator, frames: int, sigma: float = 4.0) -> np.ndarray:
    """Unit-variance smooth noise, for speech-independent face motion."""
    halfwidth = int(3 * sigma)
    taps = np.exp(-0.5 * (np.arange(-halfwidth, halfwidth + 1) / sigma) ** 2)
    taps /= taps.sum()
    raw = rng.normal(size=frames + 2 * halfwidth)
    env = np.convolve(raw, taps, mode="valid")
    env = env - env.mean()
    std = env.std()
    return env / std if std > 0 else env


@dataclass(frozen=True, eq=False)
class SynthSample:
    name: str
    identity: int
    sentence: int
    mesh: MeshSequence
    features: FeatureSequence
    track: np.ndarray


def gen_sample(
    spec: SynthSpec,
    identity: int,
    sentence: int,
    template: TemplateMesh,
    masks: dict[str, RegionMask],
    basis: MotionBasis,
) -> SynthSample:
    """One (identity, sentence) clip plus its driving features.

    Lip/jaw motion is exactly amplitude * basis[track[t]], a deterministic
    function of the phoneme track, so a model that recovers the track from
    the noisy features can drive the lips with near-zero error. Upper and
    brow motion are smooth noise envelopes scaled by the identity's upper
    energy. Features are the kernel-smoothed one-hot track plus Gaussian
    noise.
    """
    track = phoneme_track(spec, sentence)
    frames_total = track.size
    amplitude = spec.amplitude(identity)
    energy = spec.upper_energy(identity)

    motion = np.zeros((frames_total, spec.vertex_count, 3))
    lipjaw_idx = np.concatenate([masks["lip"].indices, masks["jaw"].indices])
    motion[:, lipjaw_idx] = amplitude * basis.lipjaw_offsets()[track]
    upper_env = _smooth_envelope(_rng(spec, _UPPER, identity, sentence), frames_total)
    motion[:, masks["upper"].indices] = (
        energy * upper_env[:, None, None] * basis.upper_field
    )
    brow_env = _smooth_envelope(_rng(spec, _BROW, identity, sentence), frames_total)
    motion[:, masks["brow"].indices] = (
        energy * brow_env[:, None, None] * basis.brow_field
    )
    mesh = MeshSequence(frames=template.vertices + motion, fps=spec.fps)

    onehot = np.zeros((frames_total, spec.phonemes))
    onehot[np.arange(frames_total), track] = 1.0
    kernel = np.asarray(spec.smooth_kernel)
    mix = np.stack(
        [np.convolve(onehot[:, c], kernel, mode="same") for c in range(spec.phonemes)],
        axis=1,
    )
    noise = _rng(spec, _FEATURES, identity, sentence).normal(
        0.0, spec.feature_noise, size=mix.shape
    )
    features = FeatureSequence(rows=mix + noise, frame_rate=spec.fps)
    return SynthSample(
        name=f"id{identity}_s{sentence:02d}",
        identity=identity,
        sentence=sentence,
        mesh=mesh,
        features=features,
        track=track,
    )


def split_of_sentence(spec: SynthSpec, sentence: int) -> str:
    """70/15/15 train/val/test split assigned by sentence index."""
    n_train = round(spec.sentences * 0.7)
    n_val = round(spec.sentences * 0.15)
    if sentence < n_train:
        return "train"
    if sentence < n_train + n_val:
        return "val"
    return "test"


def gen_corpus(spec: SynthSpec, out_dir) -> Path:
    """Write a full corpus: template, masks, per-sample files, manifest.

    Layout: ``template.mseq``, ``regions.txt``, ``manifest.csv``, and a
    ``data/`` directory with one ``.mseq`` and one ``.fmat`` per sample.
    Regenerating with the same spec produces byte-identical files.
    """
    out = Path(out_dir)
    (out / "data").mkdir(parents=True, exist_ok=True)
    template, masks = gen_template(spec)
    basis = motion_basis(spec, masks)
    write_mesh_sequence(
        out / "template.mseq",
        MeshSequence(frames=template.vertices[None, :, :], fps=spec.fps),
    )
    write_region_masks(out / "regions.txt", [masks[name] for name in REGION_NAMES])

    rows = []
    for identity in range(spec.identities):
        for sentence in range(spec.sentences):
            sample = gen_sample(spec, identity, sentence, template, masks, basis)
            mesh_rel = f"data/{sample.name}.mseq"
            feat_rel = f"data/{sample.name}.fmat"
            write_mesh_sequence(out / mesh_rel, sample.mesh)
            write_features(out / feat_rel, sample.features)
            rows.append(
                {
                    "name": sample.name,
                    "identity": identity,
                    "sentence": sentence,
                    "split": split_of_sentence(spec, sentence),
                    "mesh": mesh_rel,
                    "features": feat_rel,
                }
            )
    with (out / "manifest.csv").open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(
            handle, fieldnames=["name", "identity", "sentence", "split", "mesh", "features"]
        )
        writer.writeheader()
        writer.writerows(rows)
    return out
