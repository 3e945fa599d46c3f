"""Confidence-score channels and their weighted fusion.

Each channel turns the encoded query into one confidence value per vocabulary
word: the word channel by dot product against the embedding rows, the POS and
category channels from the pooled sentence vector, and the morpheme and sememe
channels from per-position hidden states max-pooled over the sequence. A
word's characteristic score is the sum of its features' predicted scores, so
words with empty feature sets get exactly zero from that channel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Graph, Node
from .lexicon import Vocabulary, WordFeatureTable

CHANNEL_ORDER = ("word", "pos", "morpheme", "category", "sememe")


@dataclass(frozen=True)
class ChannelWeights:
    """Fusion weights; characteristic channels default to the word channel's 1."""

    word: float = 1.0
    pos: float = 1.0
    morpheme: float = 1.0
    category: float = 1.0
    sememe: float = 1.0
    category_layers: tuple[float, ...] = ()  # per-layer weights, empty = all 1

    def __post_init__(self):
        values = (self.word, self.pos, self.morpheme, self.category, self.sememe)
        if any(v < 0 for v in values) or any(b < 0 for b in self.category_layers):
            raise ValueError("channel weights must be non-negative")
        if all(v == 0 for v in values):
            raise ValueError("at least one channel weight must be positive")

    def of(self, channel: str) -> float:
        return getattr(self, channel)

    def layer_weight(self, k: int) -> float:
        if k < len(self.category_layers):
            return self.category_layers[k]
        return 1.0


@dataclass(frozen=True)
class FeatureMatrices:
    """Dense 0/1 membership matrices mapping feature scores to per-word sums."""

    pos: np.ndarray                    # (|W|, |P|)
    morpheme: np.ndarray               # (|W|, |M|)
    sememe: np.ndarray                 # (|W|, |S|)
    category: tuple[np.ndarray, ...]   # per layer (|W|, c_k), one-hot or zero row

    @classmethod
    def from_table(cls, table: WordFeatureTable, vocab: Vocabulary) -> "FeatureMatrices":
        n = len(vocab)

        def membership(sets, size):
            m = np.zeros((n, size), dtype=np.float64)
            for w, s in enumerate(sets):
                for j in s:
                    m[w, j] = 1.0
            return m

        layers = []
        for k, size in enumerate(table.category_sizes):
            m = np.zeros((n, size), dtype=np.float64)
            for w, row in enumerate(table.categories):
                if row[k] is not None:
                    m[w, row[k]] = 1.0
            layers.append(m)
        return cls(
            pos=membership(table.pos_sets, len(table.pos_names)),
            morpheme=membership(table.morpheme_sets, len(table.morpheme_names)),
            sememe=membership(table.sememe_sets, len(table.sememe_names)),
            category=tuple(layers),
        )


@dataclass
class ChannelScores:
    """Graph nodes for every channel's scores plus the fused result."""

    feature_scores: dict[str, Node | list[Node]] = field(default_factory=dict)
    per_word: dict[str, Node] = field(default_factory=dict)
    fused: Node | None = None


def score_word(v: Node, w: Node, b: Node, embedding_columns: Node) -> Node:
    """Project v into embedding space and dot against every word's embedding."""
    projected = ad.affine(w, v, b)
    return ad.matmul(projected, embedding_columns)


def score_pos(v: Node, w: Node, b: Node, membership_t: Node) -> tuple[Node, Node]:
    """Tag logits from the sentence vector; per-word score sums a word's tags."""
    sc_pos = ad.affine(w, v, b)
    return sc_pos, ad.matmul(sc_pos, membership_t)


def score_morpheme(h: Node, mask: np.ndarray, w: Node, b: Node,
                   membership_t: Node) -> tuple[Node, Node]:
    """Local per-position scores, max-pooled to global, summed per word."""
    local = ad.affine(w, h, b)
    pooled, _ = ad.masked_max_pool(local, mask)
    return pooled, ad.matmul(pooled, membership_t)


def score_sememe(h: Node, mask: np.ndarray, w: Node, b: Node,
                 membership_t: Node) -> tuple[Node, Node]:
    """Same construction as the morpheme channel over the sememe registry."""
    return score_morpheme(h, mask, w, b, membership_t)


def score_category(v: Node, layer_params: Sequence[tuple[Node, Node]],
                   memberships_t: Sequence[Node],
                   weights: ChannelWeights) -> tuple[list[Node], Node]:
    """Per-layer category logits, combined as a weighted per-word sum.

    Words lacking a category at some layer have a zero membership row there
    and so collect nothing from that layer.
    """
    if not layer_params:
        raise ValueError("category channel needs at least one layer")
    per_layer: list[Node] = []
    combined: Node | None = None
    for k, ((w, b), mem_t) in enumerate(zip(layer_params, memberships_t)):
        sc_k = ad.affine(w, v, b)
        per_layer.append(sc_k)
        contrib = ad.scale(ad.matmul(sc_k, mem_t), weights.layer_weight(k))
        combined = contrib if combined is None else ad.add(combined, contrib)
    return per_layer, combined


def fuse(per_word: Mapping[str, Node], weights: ChannelWeights) -> Node:
    """Weighted sum of per-word channel confidences, in fixed channel order.

    Channels that are absent or weighted zero are skipped outright, so an
    all-zero-but-word configuration reproduces the plain word scores bit for
    bit.
    """
    fused: Node | None = None
    for channel in CHANNEL_ORDER:
        node = per_word.get(channel)
        lam = weights.of(channel)
        if node is None or lam == 0.0:
            continue
        term = ad.scale(node, lam)
        fused = term if fused is None else ad.add(fused, term)
    if fused is None:
        raise ValueError("no enabled channel supplied scores")
    return fused


def rank(scores: np.ndarray) -> np.ndarray:
    """Word indices sorted by score descending; ties go to the lower index."""
    return np.argsort(-np.asarray(scores), kind="stable")
