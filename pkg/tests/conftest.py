"""Shared fixtures: corpora, embedders, and small trained models."""

import numpy as np
import pytest

from emovec.corpus import CorpusConfig, build_corpus
from emovec.embedder import EmbedderHyper, speaker_vector_table, train_embedder
from emovec.model import ModelConfig, TrainHyper, init_params, train
from emovec.pipeline import neutral_seen_split


@pytest.fixture(scope="session")
def default_corpus():
    """The full default corpus (8 neutral-only + 4 emotional + 2 unseen)."""
    return build_corpus(CorpusConfig(), 2024)


@pytest.fixture(scope="session")
def small_corpus():
    """A cheap corpus for plumbing tests."""
    config = CorpusConfig(
        neutral_only_speakers=3,
        emotional_speakers=2,
        unseen_speakers=1,
        utterances_per_speaker=40,
    )
    return build_corpus(config, 99)


@pytest.fixture(scope="session")
def default_embedder(default_corpus):
    return train_embedder(default_corpus, 13, EmbedderHyper())


@pytest.fixture(scope="session")
def default_table(default_embedder, default_corpus):
    return speaker_vector_table(default_embedder, default_corpus)


@pytest.fixture(scope="session")
def default_vec_map(default_table):
    return {speaker: entry.embedding for speaker, entry in default_table.items()}


@pytest.fixture(scope="session")
def small_model(small_corpus):
    """A briefly trained model over the small corpus, with its vec table."""
    embedder = train_embedder(small_corpus, 5, EmbedderHyper(steps=200))
    table = speaker_vector_table(embedder, small_corpus)
    vecs = {s: e.embedding for s, e in table.items()}
    params = train(
        init_params(ModelConfig(), 3),
        neutral_seen_split(small_corpus, "train"),
        vecs,
        TrainHyper(steps=60, seed=4),
        role="pretrained",
        meta_extra={"scope": "multi"},
    )
    return params, vecs


@pytest.fixture()
def rng():
    return np.random.default_rng(20240815)
