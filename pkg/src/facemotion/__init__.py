"""Speech-driven 3D face animation with global style modulation.

The package synthesizes per-vertex face motion from framewise audio
features: a template mesh is embedded into a compact motion space, audio
features are modulated toward the statistics of a style reference clip,
and a convolutional decoder emits motion codes that reconstruct vertex
offsets through a shared linear embedding.
"""

from .analysis import (
    ActivationMaps,
    CorrelationGraph,
    StyleScatter,
    activation_entropy,
    region_correlation,
    style_scatter,
    weight_activation,
)
from .audio import (
    AudioClip,
    FeatureSequence,
    MelConfig,
    load_features,
    load_wav,
    mel_features,
    resample_features,
    write_features,
    write_wav,
)
from .autodiff import Tensor, grad_check, no_grad
from .bench import BenchResult, run_benchmark
from .errors import (
    FacemotionError,
    FormatError,
    InsufficientAudioError,
    InsufficientFramesError,
    MaskError,
    NonFiniteDataError,
    TruncatedPayloadError,
)
from .mesh import (
    MeshSequence,
    NormalizedSequence,
    RegionMask,
    TemplateMesh,
    load_mesh_sequence,
    load_region_masks,
    normalize_sequence,
    per_vertex_temporal_std,
    write_mesh_sequence,
    write_region_masks,
)
from .metrics import MetricReport, evaluate_pair, fdtw
from .model import FaceAnimator, ModelConfig, build_model
from .optim import Adam, clip_global_norm
from .synthetic import SynthSpec, gen_corpus
from .training import Corpus, TrainConfig, load_corpus, restore_model, train

__version__ = "0.1.0"

__all__ = [
    "ActivationMaps",
    "Adam",
    "AudioClip",
    "BenchResult",
    "Corpus",
    "CorrelationGraph",
    "FaceAnimator",
    "FacemotionError",
    "FeatureSequence",
    "FormatError",
    "InsufficientAudioError",
    "InsufficientFramesError",
    "MaskError",
    "MelConfig",
    "MeshSequence",
    "MetricReport",
    "ModelConfig",
    "NonFiniteDataError",
    "NormalizedSequence",
    "RegionMask",
    "StyleScatter",
    "SynthSpec",
    "TemplateMesh",
    "Tensor",
    "TrainConfig",
    "TruncatedPayloadError",
    "activation_entropy",
    "build_model",
    "clip_global_norm",
    "evaluate_pair",
    "fdtw",
    "gen_corpus",
    "grad_check",
    "load_corpus",
    "load_features",
    "load_mesh_sequence",
    "load_region_masks",
    "load_wav",
    "mel_features",
    "no_grad",
    "normalize_sequence",
    "per_vertex_temporal_std",
    "region_correlation",
    "resample_features",
    "restore_model",
    "run_benchmark",
    "style_scatter",
    "train",
    "weight_activation",
    "write_features",
    "write_mesh_sequence",
    "write_region_masks",
    "write_wav",
]
