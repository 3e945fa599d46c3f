"""Shared fixtures: a well-conditioned tiny model and a memorized toy model."""

from __future__ import annotations

from types import SimpleNamespace

import numpy as np
import pytest

from revdict.channels import ChannelWeights, FeatureMatrices
from revdict.encoder import EncoderConfig
from revdict.lexicon import Vocabulary, WordFeatureTable, batch_from_sequences
from revdict.model import ModelParams, init_params
from revdict.synth import SynthConfig, generate
from revdict.trainer import TrainConfig, train


def build_tiny(seed: int = 1, n_words: int = 50, dim: int = 8, hidden: int = 8,
               n_mor: int = 20, n_sem: int = 20, n_pos: int = 5,
               cat_sizes: tuple[int, ...] = (3, 4), batch_n: int = 8,
               param_scale: float = 0.6) -> SimpleNamespace:
    """A small fully-featured model with healthy parameter and input scales.

    Gradient magnitudes stay well above the float64 finite-difference noise
    floor, which keeps relative-error checks meaningful.
    """
    rng = np.random.default_rng(seed)
    vocab = Vocabulary.from_words([f"w{i}" for i in range(n_words)])
    emb = rng.normal(0.0, 1.0, size=(n_words, dim))
    mor = tuple(frozenset(int(j) for j in rng.choice(n_mor, 2, replace=False))
                for _ in range(n_words))
    sem = tuple(frozenset(int(j) for j in rng.choice(n_sem, 2, replace=False))
                for _ in range(n_words))
    pos = tuple(frozenset([int(rng.integers(n_pos))]) for _ in range(n_words))
    cats = tuple(tuple(int(rng.integers(s)) for s in cat_sizes) for _ in range(n_words))
    table = WordFeatureTable(
        pos_names=tuple(f"tag{i}" for i in range(n_pos)),
        morpheme_names=tuple(f"m{i}" for i in range(n_mor)),
        sememe_names=tuple(f"s{i}" for i in range(n_sem)),
        category_sizes=cat_sizes,
        pos_sets=pos, morpheme_sets=mor, sememe_sets=sem, categories=cats)
    config = TrainConfig(
        encoder=EncoderConfig(embed_dim=dim, hidden_dim=hidden, dropout=0.0))
    feats = FeatureMatrices.from_table(table, vocab)
    params = init_params(config.encoder, table, emb, seed=seed)
    for key in params.tensors:
        params.tensors[key] = rng.uniform(-param_scale, param_scale,
                                          size=params.tensors[key].shape)
    seqs = [list(rng.integers(0, n_words, size=int(rng.integers(3, 7))))
            for _ in range(batch_n)]
    batch = batch_from_sequences(seqs, list(rng.integers(0, n_words, size=batch_n)))
    return SimpleNamespace(vocab=vocab, table=table, feats=feats, params=params,
                           batch=batch, embeddings=emb, config=config)


@pytest.fixture(scope="session")
def toy_model():
    """A 10-pair corpus trained to full memorization; shared across tests."""
    data = generate(SynthConfig(
        n_train_words=10, defs_per_word=1, embed_dim=12, n_morphemes=12,
        n_sememes=12, n_pos=3, n_fillers=4, fillers_per_def=0,
        features_per_word=2, embedding_noise=0.1, seed=21))
    config = TrainConfig(
        learning_rate=0.005, epochs=250, batch_size=16, seed=21,
        encoder=EncoderConfig(embed_dim=12, hidden_dim=12, dropout=0.0))
    checkpoint, log = train(config, data.train_set, data.vocab, data.embeddings, data.table)
    params = ModelParams(checkpoint.tensors, data.embeddings)
    feats = FeatureMatrices.from_table(data.table, data.vocab)
    return SimpleNamespace(data=data, config=config, checkpoint=checkpoint,
                           params=params, feats=feats, log=log)
