import numpy as np
import pytest

from velex.config import ModelConfig
from velex.data import make_vocabulary
from velex.model import Model
from velex.text import TokenSequence


@pytest.fixture(scope="session")
def vocab():
    return make_vocabulary()


def small_config(vocab, **overrides) -> ModelConfig:
    defaults = dict(
        vocab_size=len(vocab),
        dim=16,
        region_feat_dim=6,
        backbone_layers=1,
        within_layers=1,
        cross_layers=1,
        xmodal_layers=1,
        inferrer_layers=2,
        decoder_layers=1,
        init_seed=0,
    )
    defaults.update(overrides)
    return ModelConfig(**defaults)


@pytest.fixture()
def tiny_model(vocab):
    return Model(small_config(vocab))


@pytest.fixture()
def sample_inputs(vocab):
    seq = TokenSequence.from_words(["a", "red", "dog", "is", "running"], vocab)
    spans = [(0, 3), (3, 5)]
    regions = np.random.default_rng(0).normal(size=(4, 6))  # global + 3 regions
    return seq, spans, regions
