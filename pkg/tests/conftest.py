"""Shared fixtures: synthetic corpora and a trained model, built once.

The training corpus and trained model are session-scoped because the full
pipeline is the expensive part; individual tests treat them as read-only.
"""

import numpy as np
import pytest

from neosda import pipeline as pl
from neosda import synth

TRAIN_SEED = 101
TEST_SEED = 707
PIPELINE_SEED = 7

TRAIN_SPEC = synth.SynthSpec(
    n_neonates=12, duration_s=1800, seizure_rate_per_h=4.0, seed=TRAIN_SEED
)
# Held-out set from the same distribution, plus high-amplitude artifacts.
TEST_SPEC = synth.SynthSpec(
    n_neonates=8,
    duration_s=1800,
    seizure_rate_per_h=4.0,
    artifact_rate_per_h=2.0,
    seed=TEST_SEED,
)

FAST_SETTINGS = dict(
    c_grid=(1.0, 10.0),
    gamma_grid=(0.1 / 22, 1.0 / 22),
    inner_folds=2,
    outer_folds=4,
    max_train_rows=2000,
    k_grid=(3,),
    dist_quantiles=(99.5,),
    amp_quantiles=(99.5,),
    ma_grid=(3,),
    threshold_grid=(-0.25, 0.0, 0.25),
    collar_grid=(8.0,),
    bootstrap_iters=50,
)


@pytest.fixture(scope="session")
def train_corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("train_corpus")
    synth.write_corpus(TRAIN_SPEC, out)
    return out


@pytest.fixture(scope="session")
def train_data(train_corpus_dir):
    return pl.load_corpus(train_corpus_dir)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """Four short recordings for cheap pipeline-level unit tests."""
    out = tmp_path_factory.mktemp("small_corpus")
    spec = synth.SynthSpec(
        n_neonates=4, duration_s=1200, seizure_rate_per_h=9.0, seed=11
    )
    synth.write_corpus(spec, out)
    return pl.load_corpus(out)


@pytest.fixture(scope="session")
def small_trained(small_corpus):
    settings = pl.TrainSettings(**FAST_SETTINGS)
    return pl.train_pipeline(small_corpus, settings, seed=5)


@pytest.fixture(scope="session")
def trained(train_data):
    """Model trained with the full default grids on the 12-neonate corpus."""
    return pl.train_pipeline(train_data, pl.TrainSettings(), seed=PIPELINE_SEED)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
