import numpy as np
import pytest

from facemotion.model import FaceAnimator, ModelConfig
from facemotion.synthetic import SynthSpec, gen_corpus
from facemotion.training import load_corpus


def tiny_config(vertex_count: int = 12, **overrides) -> ModelConfig:
    """A model small enough for gradient checks and fast unit tests."""
    base = dict(
        vertex_count=vertex_count,
        embed_dim=10,
        c_face=8,
        c_audio=8,
        frontend_in=5,
        frontend_channels=(6,),
        encoder_channels=(6, 8, 8, 8),
        decoder_channels=(8, 8),
    )
    base.update(overrides)
    return ModelConfig(**base)


@pytest.fixture
def tiny_model() -> FaceAnimator:
    return FaceAnimator(tiny_config(), seed=7)


@pytest.fixture(scope="session")
def small_corpus_dir(tmp_path_factory):
    """A small but complete corpus shared by read-only tests."""
    out = tmp_path_factory.mktemp("corpus")
    spec = SynthSpec(vertex_count=30, identities=3, sentences=6, frame_range=(24, 40))
    return gen_corpus(spec, out), spec


@pytest.fixture(scope="session")
def small_corpus(small_corpus_dir):
    path, _ = small_corpus_dir
    return load_corpus(path)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
