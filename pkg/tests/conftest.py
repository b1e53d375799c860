import numpy as np
import pytest

from divfuse.data import AUDIO_DIM, N_AUS, TEXT_DIM, VideoSample, write_dataset
from divfuse.model import ModelConfig


def make_sample(sid="v0", label=0, split="train", t_v=6, t_a=4, seed=0):
    rng = np.random.default_rng(seed)
    return VideoSample(
        id=sid,
        label=label,
        visual=rng.uniform(0, 1, (t_v, N_AUS)),
        audio=rng.standard_normal((t_a, AUDIO_DIM)),
        text=rng.standard_normal(TEXT_DIM),
        split=split,
    )


@pytest.fixture
def two_sample_manifest(tmp_path):
    samples = [make_sample("a", 0, seed=1), make_sample("b", 1, "val", seed=2)]
    return write_dataset(samples, tmp_path), samples


def small_config(fusion="B", modalities=("visual", "audio", "text"), **kw):
    """Narrow model so every parameter can be finite-differenced quickly."""
    opts = dict(
        input_dims={"visual": 3, "audio": 4, "text": 5},
        lstm_hidden=3,
        proj_dim=4,
        mlp_hidden=(5, 3),
        att_dim=3,
        fusion=fusion,
        modalities=modalities,
        dropout_p=0.0,
    )
    opts.update(kw)
    return ModelConfig(**opts)
