"""Bidirectional LSTM query encoder with dot-product attention.

Runs one LSTM left to right and one right to left over the valid tokens of
each row, concatenates the directional states, and pools them with attention
anchored on the sequence ends: the anchor is [last valid forward state;
backward state at the first token]. Attention weights are raw dot products by
default ("literal" mode); "softmax" mode normalizes them over valid positions.

Padding is handled by carrying state through masked steps, which keeps the
computation over valid positions bit-identical however much padding a row has.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import Graph, LstmGates, Node
from .lexicon import QueryBatch, embed_batch

ATTENTION_MODES = ("literal", "softmax")


@dataclass(frozen=True)
class EncoderConfig:
    embed_dim: int = 300
    hidden_dim: int = 300  # per direction; non-directional states have twice this
    attention: str = "literal"
    dropout: float = 0.5

    def __post_init__(self):
        if self.embed_dim < 1 or self.hidden_dim < 1:
            raise ValueError("embed_dim and hidden_dim must be >= 1")
        if self.attention not in ATTENTION_MODES:
            raise ValueError(f"attention must be one of {ATTENTION_MODES}, got {self.attention!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")


@dataclass(frozen=True)
class EncoderState:
    """Per-batch encoder outputs; forward states occupy components [0, l)."""

    h_fwd: Node   # (B, T, l)
    h_bwd: Node   # (B, T, l)
    h: Node       # (B, T, 2l)
    h_t: Node     # (B, 2l) anchor: [fwd at last valid; bwd at first token]
    alpha: Node   # (B, T), zero at masked positions
    v: Node       # (B, 2l)


def _run_direction(graph: Graph, gates: LstmGates, inputs: Node, mask: np.ndarray,
                   hidden_dim: int, reverse: bool) -> tuple[list[Node], Node]:
    """Carry LSTM state across steps; masked steps keep the previous state."""
    batch, width = mask.shape
    h = graph.constant(np.zeros((batch, hidden_dim)))
    c = graph.constant(np.zeros((batch, hidden_dim)))
    states: list[Node | None] = [None] * width
    steps = range(width - 1, -1, -1) if reverse else range(width)
    for t in steps:
        x_t = ad.time_slice(inputs, t)
        h_new, c_new = ad.lstm_step(gates, x_t, h, c)
        step_mask = mask[:, t : t + 1]
        h = ad.add(ad.apply_mask(h_new, step_mask), ad.apply_mask(h, 1.0 - step_mask))
        c = ad.add(ad.apply_mask(c_new, step_mask), ad.apply_mask(c, 1.0 - step_mask))
        states[t] = h
    return states, h  # final carry: last valid state (fwd) / state at token 0 (bwd)


def attend(h: Node, h_t: Node, mask: np.ndarray, mode: str = "literal") -> tuple[Node, Node]:
    """Attention weights and pooled sentence vector over valid positions.

    Literal mode uses the raw dot products h_t . h_i as weights; softmax mode
    normalizes them over unmasked positions. Masked positions get weight zero
    either way, so they contribute nothing to the pooled vector.
    """
    m = np.asarray(mask, dtype=np.float64)
    if np.any(m.sum(axis=-1) < 1):
        raise ValueError("attend: every row needs at least one valid position")
    raw = ad.dot_rows(h, h_t)
    if mode == "literal":
        alpha = ad.apply_mask(raw, m)
    elif mode == "softmax":
        alpha = ad.masked_softmax(raw, m)
    else:
        raise ValueError(f"unknown attention mode {mode!r}")
    v = ad.weighted_sum(alpha, h)
    return alpha, v


def encode(graph: Graph, batch: QueryBatch, embeddings: np.ndarray,
           params: Mapping[str, Node], config: EncoderConfig,
           training: bool = False, rng: np.random.Generator | None = None) -> EncoderState:
    """Encode a batch of queries into attention-pooled sentence vectors.

    Dropout hits the input embeddings and the pooled vector, only when
    ``training`` is set; the recurrence itself stays deterministic.
    """
    inputs = graph.constant(embed_batch(batch, embeddings))
    use_dropout = training and config.dropout > 0.0
    if use_dropout:
        if rng is None:
            raise ValueError("training with dropout requires an rng")
        inputs = ad.dropout(inputs, config.dropout, rng)

    gates_fwd = LstmGates.from_params(params, "lstm_fwd")
    gates_bwd = LstmGates.from_params(params, "lstm_bwd")
    fwd_states, fwd_last = _run_direction(graph, gates_fwd, inputs, batch.mask,
                                          config.hidden_dim, reverse=False)
    bwd_states, bwd_first = _run_direction(graph, gates_bwd, inputs, batch.mask,
                                           config.hidden_dim, reverse=True)

    h_fwd = ad.stack(fwd_states, axis=1)
    h_bwd = ad.stack(bwd_states, axis=1)
    h = ad.concat([h_fwd, h_bwd], axis=-1)
    h_t = ad.concat([fwd_last, bwd_first], axis=-1)
    alpha, v = attend(h, h_t, batch.mask, config.attention)
    if use_dropout:
        v = ad.dropout(v, config.dropout, rng)
    return EncoderState(h_fwd=h_fwd, h_bwd=h_bwd, h=h, h_t=h_t, alpha=alpha, v=v)
