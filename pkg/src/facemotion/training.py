"""Training loop: batching, warm-up freezing, logging, checkpoints.

Training is self-reconstructive: every sample is driven by its own audio
features with its own ground-truth clip as the style reference, so the
style pathway is the only place identity-specific amplitude can come
from. The audio frontend stays frozen for the first ``freeze_epochs``
epochs (no parameter, buffer, or optimizer-state updates), then joins
regular training.

The per-epoch data loss is averaged over valid frames only, so padded
frames in a bucketed batch contribute exactly nothing. The L1 term on the
embedding is added once per step.

After the last epoch one calibration pass over the training split
re-estimates every normalization layer's running statistics as an
equal-weight average, replacing the recency-biased EMA the loop leaves
behind; the stored checkpoints then normalize typical corpus activations
as faithfully as possible.
"""

from __future__ import annotations

import csv
import hashlib
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import FeatureSequence, load_features
from .autodiff import no_grad
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import FormatError
from .mesh import (
    MeshSequence,
    RegionMask,
    TemplateMesh,
    load_mesh_sequence,
    load_region_masks,
)
from .model import FaceAnimator, ModelConfig, load_model_state, model_state
from .optim import Adam, clip_global_norm


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 120
    batch_size: int = 8
    lr: float = 1e-4
    freeze_epochs: int = 10
    beta: float = 1e-4
    clip_norm: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch size must be >= 1")
        if not 0 <= self.freeze_epochs <= self.epochs:
            raise ValueError("freeze_epochs must lie in [0, epochs]")
        if self.lr <= 0 or self.beta < 0 or self.clip_norm <= 0:
            raise ValueError("invalid optimizer settings")


@dataclass(frozen=True, eq=False)
class Sample:
    name: str
    identity: int
    split: str
    mesh: MeshSequence
    features: FeatureSequence


@dataclass(frozen=True, eq=False)
class Corpus:
    template: TemplateMesh
    masks: dict[str, RegionMask]
    samples: list[Sample]

    def split(self, name: str) -> list[Sample]:
        return [s for s in self.samples if s.split == name]

    @property
    def vertex_count(self) -> int:
        return self.template.vertex_count


def load_corpus(corpus_dir) -> Corpus:
    """Load a generated corpus directory (manifest, template, masks, data)."""
    root = Path(corpus_dir)
    manifest = root / "manifest.csv"
    if not manifest.is_file():
        raise FormatError(f"{root}: no manifest.csv; not a corpus directory")
    template_seq = load_mesh_sequence(root / "template.mseq")
    template = TemplateMesh(vertices=template_seq.frames.mean(axis=0))
    masks = load_region_masks(root / "regions.txt")
    samples = []
    with manifest.open(newline="", encoding="utf-8") as handle:
        for row in csv.DictReader(handle):
            samples.append(
                Sample(
                    name=row["name"],
                    identity=int(row["identity"]),
                    split=row["split"],
                    mesh=load_mesh_sequence(root / row["mesh"]),
                    features=load_features(root / row["features"]),
                )
            )
    if not samples:
        raise FormatError(f"{manifest}: manifest lists no samples")
    return Corpus(template=template, masks=masks, samples=samples)


@dataclass(frozen=True, eq=False)
class Batch:
    """Length-bucketed samples padded to a common frame count.

    ``frame_mask`` marks valid rows; padded rows hold zeros and are
    excluded from the loss by construction (each sample is processed at
    its true length, the padded arrays are the storage layout).
    """

    samples: list[Sample]
    lengths: np.ndarray        # (B,)
    features: np.ndarray       # (B, T_max, C)
    frames: np.ndarray         # (B, T_max, N, 3)
    frame_mask: np.ndarray     # (B, T_max) bool


def make_batches(samples, batch_size: int, seed: int = 0) -> list[Batch]:
    """Shuffle, sort by length, and chunk so equal lengths avoid padding."""
    if batch_size < 1:
        raise ValueError("batch size must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 77]))
    pool = list(samples)
    rng.shuffle(pool)
    pool.sort(key=lambda s: s.mesh.frame_count)  # stable: keeps shuffle within ties
    chunks = [pool[i:i + batch_size] for i in range(0, len(pool), batch_size)]
    rng.shuffle(chunks)
    batches = []
    for chunk in chunks:
        lengths = np.array([s.mesh.frame_count for s in chunk])
        t_max = int(lengths.max())
        n = chunk[0].mesh.vertex_count
        c = chunk[0].features.channels
        features = np.zeros((len(chunk), t_max, c))
        frames = np.zeros((len(chunk), t_max, n, 3))
        mask = np.zeros((len(chunk), t_max), dtype=bool)
        for i, sample in enumerate(chunk):
            t = sample.mesh.frame_count
            features[i, :t] = sample.features.rows
            frames[i, :t] = sample.mesh.frames
            mask[i, :t] = True
        batches.append(
            Batch(samples=chunk, lengths=lengths, features=features, frames=frames, frame_mask=mask)
        )
    return batches


@dataclass(frozen=True)
class EpochRow:
    epoch: int
    data_loss: float
    val_loss: float  # nan when the corpus has no validation split
    reg_loss: float
    frozen: bool
    seconds: float


@dataclass
class TrainLog:
    rows: list[EpochRow]

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["epoch", "data_loss", "val_loss", "reg_loss", "frozen", "seconds"])
            for r in self.rows:
                writer.writerow(
                    [
                        r.epoch,
                        f"{r.data_loss:.10g}",
                        f"{r.val_loss:.10g}",
                        f"{r.reg_loss:.10g}",
                        int(r.frozen),
                        f"{r.seconds:.3f}",
                    ]
                )

    @classmethod
    def read_csv(cls, path) -> "TrainLog":
        rows = []
        with Path(path).open(newline="", encoding="utf-8") as handle:
            for row in csv.DictReader(handle):
                rows.append(
                    EpochRow(
                        epoch=int(row["epoch"]),
                        data_loss=float(row["data_loss"]),
                        val_loss=float(row["val_loss"]),
                        reg_loss=float(row["reg_loss"]),
                        frozen=bool(int(row["frozen"])),
                        seconds=float(row["seconds"]),
                    )
                )
        return cls(rows=rows)


def frontend_parameter_names(model: FaceAnimator) -> set[str]:
    return {name for name, _ in model.parameters() if name.startswith("frontend.")}


def parameter_fingerprint(model: FaceAnimator, prefix: str = "") -> str:
    """SHA-256 over the exact bytes of matching parameters and buffers."""
    digest = hashlib.sha256()
    for name, p in model.parameters():
        if name.startswith(prefix):
            digest.update(name.encode())
            digest.update(np.ascontiguousarray(p.data).tobytes())
    for name, owner, attr in model.buffers():
        if name.startswith(prefix):
            digest.update(name.encode())
            digest.update(np.ascontiguousarray(getattr(owner, attr)).tobytes())
    return digest.hexdigest()


def calibrate_norms(model: FaceAnimator, template: TemplateMesh, samples) -> None:
    """Replace normalization running stats with equal-weight averages.

    Runs every sample through the model in training mode (no graph) with
    the norm layers set to cumulative averaging, so the buffers end up as
    the plain mean of per-sequence statistics instead of an EMA over the
    last few optimizer steps. Frozen submodules keep their buffers.
    """
    norm_layers = []
    seen = set()
    for _, owner, _ in model.buffers():
        if id(owner) not in seen and hasattr(owner, "begin_calibration"):
            seen.add(id(owner))
            norm_layers.append(owner)
    was_training = model.training
    model.train(True)
    for layer in norm_layers:
        layer.begin_calibration()
    try:
        with no_grad():
            for sample in samples:
                model.forward(template, sample.features, sample.mesh)
    finally:
        for layer in norm_layers:
            layer.end_calibration()
        model.train(was_training)


def batch_loss(model: FaceAnimator, template: TemplateMesh, batch: Batch, beta: float):
    """Graph for one batch: frame-averaged data term + beta * L1.

    Each sample runs at its true length with its own clip as the style
    reference, so padded frames never enter the graph.
    """
    data_sum = None
    total_frames = int(batch.lengths.sum())
    for sample in batch.samples:
        pred = model.forward(template, sample.features, sample.mesh)
        term = model.data_term(pred, sample.mesh)
        data_sum = term if data_sum is None else data_sum + term
    data_mean = data_sum * (1.0 / total_frames)
    reg = model.embedding_l1() * beta
    return data_mean + reg, float(data_mean.data), float(reg.data)


def validation_loss(model: FaceAnimator, template: TemplateMesh, samples) -> float:
    """Frame-averaged data term over a sample list, eval mode, no graph."""
    if not samples:
        return float("nan")
    was_training = model.training
    model.eval()
    total = 0.0
    frames = 0
    try:
        with no_grad():
            for sample in samples:
                pred = model.forward(template, sample.features, sample.mesh)
                total += float(model.data_term(pred, sample.mesh).data)
                frames += sample.mesh.frame_count
    finally:
        model.train(was_training)
    return total / frames


def train(
    corpus: Corpus,
    model: FaceAnimator,
    cfg: TrainConfig,
    out_dir=None,
    optimizer: Adam | None = None,
    start_epoch: int = 0,
    on_epoch=None,
) -> TrainLog:
    """Run the training loop; returns the per-epoch log.

    When ``out_dir`` is given, writes ``train_log.csv``, ``final.ckpt``,
    and ``best.ckpt`` (lowest validation data loss; only if a validation
    split exists). Normalization statistics are re-calibrated over the
    training split after the last epoch, before the final checkpoint.
    ``on_epoch(epoch, model)`` runs after each epoch.
    Resumption: pass the restored optimizer and ``start_epoch`` from the
    checkpoint and the epoch numbering continues where it left off.
    """
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    train_samples = corpus.split("train")
    if not train_samples:
        raise ValueError("corpus has no training split")
    val_samples = corpus.split("val")
    frontend_names = frontend_parameter_names(model)
    optimizer = optimizer or Adam(model.parameters(), lr=cfg.lr)

    log_rows = []
    best_val = float("inf")
    config_text = model.cfg.to_text()

    def dump(path, epoch):
        arrays = dict(model_state(model))
        for name, arr in optimizer.state_arrays().items():
            arrays[f"adam.{name}"] = arr
        save_checkpoint(path, arrays, epoch, config_text)

    for epoch in range(start_epoch + 1, cfg.epochs + 1):
        started = time.perf_counter()
        frozen = epoch <= cfg.freeze_epochs
        model.train(True)
        model.frontend.freeze(frozen)
        skip = frontend_names if frozen else ()
        batches = make_batches(train_samples, cfg.batch_size, seed=cfg.seed + epoch)
        data_losses = []
        for batch in batches:
            optimizer.zero_grad()
            total, data_value, _ = batch_loss(model, corpus.template, batch, cfg.beta)
            total.backward()
            clip_global_norm(
                [(n, p) for n, p in model.parameters() if n not in skip], cfg.clip_norm
            )
            optimizer.step(skip=skip)
            data_losses.append(data_value)
        reg_value = cfg.beta * float(np.abs(model.embedding.data).sum())
        val = validation_loss(model, corpus.template, val_samples)
        row = EpochRow(
            epoch=epoch,
            data_loss=float(np.mean(data_losses)),
            val_loss=val,
            reg_loss=reg_value,
            frozen=frozen,
            seconds=time.perf_counter() - started,
        )
        log_rows.append(row)
        if val_samples and out is not None and val < best_val:
            best_val = val
            dump(out / "best.ckpt", epoch)
        if on_epoch is not None:
            on_epoch(epoch, model)

    calibrate_norms(model, corpus.template, train_samples)
    log = TrainLog(rows=log_rows)
    if out is not None:
        if val_samples:
            val = validation_loss(model, corpus.template, val_samples)
            if val < best_val:
                best_val = val
                dump(out / "best.ckpt", cfg.epochs)
        dump(out / "final.ckpt", cfg.epochs)
        log.write_csv(out / "train_log.csv")
    return log


def restore_model(path) -> tuple[FaceAnimator, dict[str, np.ndarray], int, ModelConfig]:
    """Rebuild a model from a checkpoint; returns (model, arrays, epoch, cfg)."""
    arrays, epoch, config_text = load_checkpoint(path)
    cfg = ModelConfig.from_text(config_text)
    model = FaceAnimator(cfg)
    load_model_state(model, arrays)
    return model, arrays, epoch, cfg


def restore_optimizer(model: FaceAnimator, arrays: dict[str, np.ndarray], lr: float) -> Adam:
    optimizer = Adam(model.parameters(), lr=lr)
    state = {
        name[len("adam."):]: arr for name, arr in arrays.items() if name.startswith("adam.")
    }
    if state:
        optimizer.load_state(state)
    return optimizer
