"""Parameter initialization and the full query-to-scores forward pass."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Graph, Node
from .channels import ChannelScores, ChannelWeights, FeatureMatrices, fuse, score_category, \
    score_morpheme, score_pos, score_sememe, score_word
from .encoder import EncoderConfig, EncoderState, encode
from .lexicon import QueryBatch, WordFeatureTable

LSTM_GATE_NAMES = ("input", "forget", "output", "candidate")


@dataclass
class ModelParams:
    """Trainable tensors by name plus the fixed embedding matrix."""

    tensors: dict[str, np.ndarray]
    embeddings: np.ndarray  # (|W|, d), never updated

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.tensors.items()}, self.embeddings)


def _glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_out, fan_in))


def init_params(config: EncoderConfig, table: WordFeatureTable,
                embeddings: np.ndarray, seed: int) -> ModelParams:
    """Fresh parameters: Glorot-uniform weights, zero biases, fixed draw order."""
    if embeddings.shape[1] != config.embed_dim:
        raise ValueError(
            f"embedding dim {embeddings.shape[1]} does not match config {config.embed_dim}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    d, l = config.embed_dim, config.hidden_dim
    tensors: dict[str, np.ndarray] = {}
    for direction in ("lstm_fwd", "lstm_bwd"):
        for gate in LSTM_GATE_NAMES:
            tensors[f"{direction}.w_{gate}"] = _glorot(rng, l, d + l)
            tensors[f"{direction}.b_{gate}"] = np.zeros(l)
    tensors["word.w"] = _glorot(rng, d, 2 * l)
    tensors["word.b"] = np.zeros(d)
    if table.pos_names:
        tensors["pos.w"] = _glorot(rng, len(table.pos_names), 2 * l)
        tensors["pos.b"] = np.zeros(len(table.pos_names))
    if table.morpheme_names:
        tensors["morpheme.w"] = _glorot(rng, len(table.morpheme_names), 2 * l)
        tensors["morpheme.b"] = np.zeros(len(table.morpheme_names))
    for k, size in enumerate(table.category_sizes):
        tensors[f"category{k}.w"] = _glorot(rng, size, 2 * l)
        tensors[f"category{k}.b"] = np.zeros(size)
    if table.sememe_names:
        tensors["sememe.w"] = _glorot(rng, len(table.sememe_names), 2 * l)
        tensors["sememe.b"] = np.zeros(len(table.sememe_names))
    return ModelParams(tensors=tensors, embeddings=embeddings)


def register_params(graph: Graph, params: ModelParams) -> dict[str, Node]:
    """Register every trainable tensor as a parameter leaf, in sorted order."""
    return {name: graph.parameter(name, params.tensors[name])
            for name in sorted(params.tensors)}


def score_batch(graph: Graph, params: ModelParams, param_nodes: dict[str, Node],
                batch: QueryBatch, feats: FeatureMatrices, config: EncoderConfig,
                weights: ChannelWeights, training: bool = False,
                rng: np.random.Generator | None = None) -> tuple[ChannelScores, EncoderState]:
    """Run the encoder and every enabled channel, then fuse.

    A channel participates when its registry is non-empty and its fusion
    weight is positive; anything else contributes exactly zero.
    """
    state = encode(graph, batch, params.embeddings, param_nodes, config, training, rng)
    scores = ChannelScores()

    emb_columns = graph.constant(params.embeddings.T)
    sc_word = score_word(state.v, param_nodes["word.w"], param_nodes["word.b"], emb_columns)
    scores.feature_scores["word"] = sc_word
    scores.per_word["word"] = sc_word

    if "pos.w" in param_nodes and weights.pos > 0.0:
        sc_pos, pw = score_pos(state.v, param_nodes["pos.w"], param_nodes["pos.b"],
                               graph.constant(feats.pos.T))
        scores.feature_scores["pos"] = sc_pos
        scores.per_word["pos"] = pw

    if "morpheme.w" in param_nodes and weights.morpheme > 0.0:
        sc_mor, pw = score_morpheme(state.h, batch.mask, param_nodes["morpheme.w"],
                                    param_nodes["morpheme.b"],
                                    graph.constant(feats.morpheme.T))
        scores.feature_scores["morpheme"] = sc_mor
        scores.per_word["morpheme"] = pw

    n_layers = len(feats.category)
    if n_layers and f"category0.w" in param_nodes and weights.category > 0.0:
        layer_params = [(param_nodes[f"category{k}.w"], param_nodes[f"category{k}.b"])
                        for k in range(n_layers)]
        memberships = [graph.constant(feats.category[k].T) for k in range(n_layers)]
        per_layer, pw = score_category(state.v, layer_params, memberships, weights)
        scores.feature_scores["category"] = per_layer
        scores.per_word["category"] = pw

    if "sememe.w" in param_nodes and weights.sememe > 0.0:
        sc_sem, pw = score_sememe(state.h, batch.mask, param_nodes["sememe.w"],
                                  param_nodes["sememe.b"], graph.constant(feats.sememe.T))
        scores.feature_scores["sememe"] = sc_sem
        scores.per_word["sememe"] = pw

    scores.fused = fuse(scores.per_word, weights)
    return scores, state


def score_queries(params: ModelParams, batch: QueryBatch, feats: FeatureMatrices,
                  config: EncoderConfig, weights: ChannelWeights) -> ChannelScores:
    """Deterministic inference pass; returns the scores with values populated."""
    graph = Graph()
    param_nodes = register_params(graph, params)
    scores, _ = score_batch(graph, params, param_nodes, batch, feats, config, weights,
                            training=False)
    return scores
