"""The face animation model.

Synthesis runs in one non-autoregressive pass:

1. A trainable convolutional frontend maps per-frame audio features
   (resampled to the mesh frame rate) to audio latents, one row per
   output frame.
2. A style reference clip is mean-centered, projected through a shared
   mesh embedding matrix, and run through a strided residual encoder;
   the temporal mean/std of the result feed one linear layer that
   predicts target statistics.
3. Adaptive instance normalization re-styles the audio latents with the
   predicted statistics (global modulation: one mean/std pair per clip).
4. A stride-1 residual decoder, seeded with the embedded template face,
   turns the fused latents into per-frame motion features, which the
   transposed embedding maps back to vertex displacements:
   output = template + alpha * embedding @ motion[t].

The embedding matrix is shared by the style projection, the template
seed, and the output head, and carries an L1 penalty during training so
each motion feature touches a compact vertex region.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from .audio import FeatureSequence, resample_features
from .autodiff import (
    Tensor,
    absolute,
    add,
    concat,
    matmul,
    mul,
    narrow,
    sqrt,
    sum_,
    transpose,
)
from .errors import InsufficientFramesError
from .layers import (
    Conv1d,
    ConvUnit,
    Linear,
    Module,
    ResBlock1d,
    Stack,
    adain,
    adain_raw,
    temporal_stats,
    temporal_stats_raw,
)
from .mesh import MeshSequence, NormalizedSequence, TemplateMesh, normalize_sequence


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and loss settings; round-trips through key=value text."""

    vertex_count: int = 0
    embed_dim: int = 256
    c_face: int = 256
    c_audio: int = 256
    fps: float = 30.0
    alpha: float = 0.1
    beta: float = 1e-4
    frontend: str = "features"  # "features" (FMAT input) or "mel" (wav input)
    frontend_in: int = 8
    frontend_channels: tuple = (64, 128)
    encoder_channels: tuple = (64, 128, 256, 256)
    decoder_channels: tuple = (256, 256)
    use_modulation: bool = True
    mel_window: int = 400
    mel_hop: int = 160
    mel_bands: int = 40

    def __post_init__(self):
        object.__setattr__(self, "frontend_channels", tuple(self.frontend_channels))
        object.__setattr__(self, "encoder_channels", tuple(self.encoder_channels))
        object.__setattr__(self, "decoder_channels", tuple(self.decoder_channels))
        if self.frontend not in ("features", "mel"):
            raise ValueError(f"unknown frontend kind {self.frontend!r}")
        if len(self.encoder_channels) < 2:
            raise ValueError("style encoder needs at least two stages")
        if self.encoder_channels[-1] != self.c_face:
            raise ValueError("last encoder channel width must equal c_face")
        if not self.decoder_channels:
            raise ValueError("decoder needs at least one stage")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.fps <= 0:
            raise ValueError("fps must be positive")

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, base: "ModelConfig | None" = None) -> "ModelConfig":
        values = parse_config_text(text)
        cfg = base or cls()
        return replace(cfg, **values)


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines into ModelConfig field values."""
    kinds = {f.name: f for f in fields(ModelConfig)}
    tuple_fields = {"frontend_channels", "encoder_channels", "decoder_channels"}
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        if key not in kinds:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        if key in tuple_fields:
            out[key] = tuple(int(v) for v in value.split(",") if v.strip())
        elif key == "use_modulation":
            if value.lower() not in ("true", "false"):
                raise ValueError(f"line {lineno}: expected true/false")
            out[key] = value.lower() == "true"
        elif key == "frontend":
            out[key] = value
        elif key in ("fps", "alpha", "beta"):
            out[key] = float(value)
        else:
            out[key] = int(value)
    return out


@dataclass
class StyleCode:
    """Per-clip global style: latent statistics and the predicted targets."""

    style_mean: np.ndarray
    style_std: np.ndarray
    predicted_mean: np.ndarray | None = None
    predicted_std: np.ndarray | None = None


def _encoder_strides(count: int) -> list[int]:
    # Exactly two stride-2 stages, placed last: total downsampling of 4.
    return [1] * (count - 2) + [2, 2]


class FaceAnimator(Module):
    """Template + audio features + style reference -> mesh sequence."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        super().__init__()
        if cfg.vertex_count < 4:
            raise ValueError("config must set vertex_count (>= 4)")
        self.cfg = cfg
        rng = np.random.default_rng(np.random.SeedSequence([seed, 2024]))
        flat = 3 * cfg.vertex_count
        self.embedding = Tensor(
            rng.uniform(-1, 1, (flat, cfg.embed_dim)) / np.sqrt(flat), requires_grad=True
        )
        # conv+norm+act stages only: residual blocks at full width would put a
        # c_audio x c_audio convolution in front of every synthesized frame.
        frontend_blocks = []
        prev = cfg.frontend_in
        for width in (*cfg.frontend_channels, cfg.c_audio):
            frontend_blocks.append(ConvUnit(prev, width, rng, kernel=3))
            prev = width
        self.frontend = Stack(frontend_blocks)
        enc_channels = cfg.encoder_channels
        self.style_encoder = Stack(
            self._blocks(cfg.embed_dim, enc_channels, _encoder_strides(len(enc_channels)), rng)
        )
        self.style_map = Linear(2 * cfg.c_face, 2 * cfg.c_audio, rng)
        self.template_proj = Linear(cfg.embed_dim, cfg.c_audio, rng)
        decoder_blocks = self._blocks(cfg.c_audio, cfg.decoder_channels, None, rng)
        self.decoder = Stack(decoder_blocks)
        self.motion_head = Conv1d(cfg.decoder_channels[-1], cfg.embed_dim, 1, 1, rng)
        # small output head: early outputs hug the template instead of
        # random deformations, so optimization starts from the neutral face
        self.motion_head.weight.data *= 0.05
        self.motion_head.bias.data *= 0.05

    @staticmethod
    def _blocks(in_channels, widths, strides, rng):
        strides = strides or [1] * len(widths)
        blocks = []
        prev = in_channels
        for width, stride in zip(widths, strides):
            blocks.append(ResBlock1d(prev, width, rng, kernel=3, stride=stride))
            prev = width
        return blocks

    def children(self):
        return [
            ("frontend", self.frontend),
            ("style_encoder", self.style_encoder),
            ("style_map", self.style_map),
            ("template_proj", self.template_proj),
            ("decoder", self.decoder),
            ("motion_head", self.motion_head),
        ]

    def local_parameters(self):
        return [("embedding", self.embedding)]

    # ----- pipeline stages -------------------------------------------------

    def embed_faces(self, frames) -> Tensor:
        """Project (T, N, 3) frames through the shared embedding: (T, E).

        Accepts a NormalizedSequence or a raw array; style references
        should be mean-centered first.
        """
        if isinstance(frames, NormalizedSequence):
            frames = frames.frames
        frames = np.asarray(frames, dtype=np.float64)
        t = frames.shape[0]
        return matmul(Tensor(frames.reshape(t, -1)), self.embedding)

    def encode_style(self, embedded: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        """Run the strided encoder; returns (latents, mean, std).

        The encoder halves time twice, so it needs at least 4 frames.
        Mean and std are per-channel over the latent rows, population
        convention, shaped (1, c_face).
        """
        if embedded.data.shape[0] < 4:
            raise InsufficientFramesError(
                f"style encoder needs >= 4 frames, got {embedded.data.shape[0]}"
            )
        latents = self.style_encoder(embedded)
        center, std = temporal_stats(latents)
        return latents, center, std

    def predict_modulation(self, style_mean: Tensor, style_std: Tensor) -> tuple[Tensor, Tensor]:
        """One linear layer from latent statistics to AdaIN targets."""
        joint = self.style_map(concat([style_mean, style_std], axis=1))
        target_mean = narrow(joint, 1, 0, self.cfg.c_audio)
        target_std = narrow(joint, 1, self.cfg.c_audio, self.cfg.c_audio)
        return target_mean, target_std

    def fuse(self, audio_latents: Tensor, target_mean: Tensor, target_std: Tensor) -> Tensor:
        """Re-style audio latents; a plain passthrough when modulation is off."""
        if not self.cfg.use_modulation:
            return audio_latents
        return adain(audio_latents, target_mean, target_std)

    def encode_audio(self, rows: np.ndarray) -> Tensor:
        """Trainable frontend over already-resampled (T, C_in) features."""
        if rows.shape[1] != self.cfg.frontend_in:
            raise ValueError(
                f"frontend expects {self.cfg.frontend_in} channels, got {rows.shape[1]}"
            )
        return self.frontend(Tensor(rows))

    def decode_motion(self, fused: Tensor, template_embed: Tensor) -> Tensor:
        """Stride-1 decoding of fused latents into (T, E) motion features.

        The embedded template is linearly projected and added to every
        frame before the first block, so the decoder knows whose face it
        is deforming. Output length always equals input length.
        """
        seeded = add(fused, self.template_proj(template_embed))
        return self.motion_head(self.decoder(seeded))

    def reconstruct(self, motion: Tensor, template: np.ndarray) -> Tensor:
        """template + alpha * embedding @ motion[t], flattened to (T, 3N)."""
        flat = np.asarray(template, dtype=np.float64).reshape(1, -1)
        deltas = matmul(motion, transpose(self.embedding))
        return add(Tensor(flat), mul(deltas, self.cfg.alpha))

    def embed_template(self, template: np.ndarray) -> Tensor:
        flat = np.asarray(template, dtype=np.float64).reshape(1, -1)
        return matmul(Tensor(flat), self.embedding)

    def decoder_receptive_field(self) -> int:
        """1 + sum(k - 1) over the decode path's main convolutions."""
        kernels = []
        for block in self.decoder.blocks:
            kernels.extend(block.conv_kernels())
        kernels.append(self.motion_head.kernel)
        return 1 + sum(k - 1 for k in kernels)

    # ----- end-to-end ------------------------------------------------------

    def prepare_features(self, feat: FeatureSequence) -> np.ndarray:
        """Resample driving features to the model frame rate."""
        if feat.frame_rate <= 0:
            raise ValueError("driving features need a positive frame rate")
        target_len = max(1, round(feat.frame_count / feat.frame_rate * self.cfg.fps))
        if feat.frame_rate == self.cfg.fps and target_len == feat.frame_count:
            return feat.rows
        return resample_features(feat, self.cfg.fps, target_len).rows

    def style_code(self, style: MeshSequence) -> StyleCode:
        """Precompute a clip's modulation targets (inference conditioning).

        The code is detached, so it carries no gradients; training paths
        should pass the clip itself to keep the style encoder learnable.
        One code can drive any number of utterances, which is the usual
        deployment shape (one style reference, many sentences).
        """
        if style.vertex_count != self.cfg.vertex_count:
            raise ValueError(
                f"model was built for {self.cfg.vertex_count} vertices, "
                f"style clip has {style.vertex_count}"
            )
        normalized, _ = normalize_sequence(style)
        _, style_mean, style_std = self.encode_style(self.embed_faces(normalized))
        target_mean, target_std = self.predict_modulation(style_mean, style_std)
        return StyleCode(
            style_mean=style_mean.data.copy(),
            style_std=style_std.data.copy(),
            predicted_mean=target_mean.data.copy(),
            predicted_std=target_std.data.copy(),
        )

    def forward(
        self,
        template: np.ndarray | TemplateMesh,
        feat: FeatureSequence,
        style: MeshSequence | StyleCode,
    ) -> Tensor:
        """Build the full synthesis graph; returns (T, 3N) predictions."""
        if isinstance(template, TemplateMesh):
            template = template.vertices
        if template.shape[0] != self.cfg.vertex_count:
            raise ValueError(
                f"model was built for {self.cfg.vertex_count} vertices, "
                f"template has {template.shape[0]}"
            )
        audio_latents = self.encode_audio(self.prepare_features(feat))
        if isinstance(style, StyleCode):
            target_mean = Tensor(style.predicted_mean)
            target_std = Tensor(style.predicted_std)
        else:
            if style.vertex_count != self.cfg.vertex_count:
                raise ValueError(
                    f"model was built for {self.cfg.vertex_count} vertices, "
                    f"style clip has {style.vertex_count}"
                )
            normalized, _ = normalize_sequence(style)
            _, style_mean, style_std = self.encode_style(self.embed_faces(normalized))
            target_mean, target_std = self.predict_modulation(style_mean, style_std)
        fused = self.fuse(audio_latents, target_mean, target_std)
        motion = self.decode_motion(fused, self.embed_template(template))
        return self.reconstruct(motion, template)

    def _infer_flat(
        self,
        template: np.ndarray,
        feat: FeatureSequence,
        style: MeshSequence | StyleCode,
    ) -> np.ndarray:
        """Raw-array forward with eval-mode semantics.

        Mirrors forward() operation for operation (the conv routine is
        literally shared), so its output is bitwise identical to the graph
        path in eval mode; a regression test holds both routes together.
        """
        rows = self.prepare_features(feat)
        if rows.shape[1] != self.cfg.frontend_in:
            raise ValueError(
                f"frontend expects {self.cfg.frontend_in} channels, got {rows.shape[1]}"
            )
        audio_latents = self.frontend.infer(rows)
        if isinstance(style, StyleCode):
            target_mean, target_std = style.predicted_mean, style.predicted_std
        else:
            normalized, _ = normalize_sequence(style)
            frames = normalized.frames
            if frames.shape[0] < 4:
                raise InsufficientFramesError(
                    f"style encoder needs >= 4 frames, got {frames.shape[0]}"
                )
            embedded = frames.reshape(frames.shape[0], -1) @ self.embedding.data
            latents = self.style_encoder.infer(embedded)
            center, std = temporal_stats_raw(latents)
            joint = self.style_map.infer(np.concatenate([center, std], axis=1))
            target_mean = joint[:, : self.cfg.c_audio]
            target_std = joint[:, self.cfg.c_audio : 2 * self.cfg.c_audio]
        if self.cfg.use_modulation:
            fused = adain_raw(audio_latents, target_mean, target_std)
        else:
            fused = audio_latents
        flat = template.reshape(1, -1)
        seeded = fused + self.template_proj.infer(flat @ self.embedding.data)
        motion = self.motion_head.infer(self.decoder.infer(seeded))
        return flat + (motion @ self.embedding.data.T) * self.cfg.alpha

    def synthesize(
        self,
        template: np.ndarray | TemplateMesh,
        feat: FeatureSequence,
        style: MeshSequence | StyleCode,
    ) -> MeshSequence:
        """Inference: eval mode, no graph, returns a MeshSequence."""
        if isinstance(template, TemplateMesh):
            template = template.vertices
        if template.shape[0] != self.cfg.vertex_count:
            raise ValueError(
                f"model was built for {self.cfg.vertex_count} vertices, "
                f"template has {template.shape[0]}"
            )
        if isinstance(style, MeshSequence) and style.vertex_count != self.cfg.vertex_count:
            raise ValueError(
                f"model was built for {self.cfg.vertex_count} vertices, "
                f"style clip has {style.vertex_count}"
            )
        was_training = self.training
        self.eval()
        try:
            flat = self._infer_flat(np.asarray(template, dtype=np.float64), feat, style)
        finally:
            self.train(was_training)
        frames = flat.reshape(-1, self.cfg.vertex_count, 3)
        return MeshSequence(frames=frames, fps=self.cfg.fps)

    # ----- loss ------------------------------------------------------------

    def embedding_l1(self) -> Tensor:
        return sum_(absolute(self.embedding))

    def data_term(self, pred_flat: Tensor, truth: MeshSequence | np.ndarray) -> Tensor:
        """Sum over frames of the Euclidean norm of the flattened residual."""
        if isinstance(truth, MeshSequence):
            truth = truth.frames
        t = truth.shape[0]
        residual = add(pred_flat, Tensor(-truth.reshape(t, -1)))
        squared = sum_(mul(residual, residual), axis=1)
        return sum_(sqrt(squared))

    def loss(self, pred_flat: Tensor, truth, beta: float | None = None) -> Tensor:
        """Data term plus beta * L1 of the embedding matrix."""
        beta = self.cfg.beta if beta is None else beta
        total = self.data_term(pred_flat, truth)
        if beta:
            total = add(total, mul(self.embedding_l1(), beta))
        return total


def build_model(cfg: ModelConfig, seed: int = 0) -> FaceAnimator:
    return FaceAnimator(cfg, seed=seed)


def model_state(model: FaceAnimator) -> dict[str, np.ndarray]:
    """Parameters and buffers as a flat name -> array mapping."""
    out = {f"param.{name}": p.data for name, p in model.parameters()}
    for name, owner, attr in model.buffers():
        out[f"buffer.{name}"] = getattr(owner, attr)
    return out


def load_model_state(model: FaceAnimator, arrays: dict[str, np.ndarray]) -> None:
    """Restore parameters and buffers saved by model_state."""
    for name, p in model.parameters():
        value = arrays[f"param.{name}"]
        p.data = np.asarray(value, dtype=np.float64).reshape(p.data.shape)
    for name, owner, attr in model.buffers():
        value = arrays[f"buffer.{name}"]
        setattr(owner, attr, np.asarray(value, dtype=np.float64).reshape(getattr(owner, attr).shape))
