"""Ranking metrics, the test-set harness, and prior-knowledge filtering."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channels import ChannelWeights, FeatureMatrices, rank
from .encoder import EncoderConfig
from .lexicon import DefinitionDataset, Vocabulary, WordFeatureTable, make_batches
from .model import ModelParams, score_queries

PRIOR_MODES = ("pos", "initial_letter", "word_length")
DEFAULT_TOP_N = 1000  # candidate window the filters operate on


@dataclass(frozen=True)
class PriorKnowledge:
    """Partial knowledge about the target: tag, first letter, or length."""

    pos: int | None = None            # index into the POS registry
    initial_letter: str | None = None  # single character, compared case-folded
    word_length: int | None = None     # character count

    def __post_init__(self):
        if self.pos is None and self.initial_letter is None and self.word_length is None:
            raise ValueError("prior knowledge needs at least one field set")
        if self.initial_letter is not None and len(self.initial_letter) != 1:
            raise ValueError("initial letter must be a single character")
        if self.word_length is not None and self.word_length < 1:
            raise ValueError("word length must be >= 1")


@dataclass(frozen=True)
class EvalReport:
    """Per-query ranks plus the summary columns of the usual results table."""

    ranks: tuple[int, ...]
    median_rank: int
    acc1: float
    acc10: float
    acc100: float
    rank_std: float
    count: int

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "median_rank": self.median_rank,
            "acc@1": self.acc1,
            "acc@10": self.acc10,
            "acc@100": self.acc100,
            "rank_std": self.rank_std,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def table_text(self) -> str:
        # "rank variance" is the conventional column name for the rank std
        header = f"{'median rank':>12}  {'acc@1/10/100':>18}  {'rank variance':>14}"
        accs = f"{self.acc1:.2f}/{self.acc10:.2f}/{self.acc100:.2f}"
        row = f"{self.median_rank:>12d}  {accs:>18}  {self.rank_std:>14.1f}"
        return header + "\n" + row


def rank_of_target(scores: np.ndarray, target: int) -> int:
    """0-based rank: words strictly ahead under score-desc, index-asc order."""
    scores = np.asarray(scores)
    if not 0 <= target < scores.shape[0]:
        raise IndexError(f"target {target} out of range for {scores.shape[0]} words")
    s = scores[target]
    better = int((scores > s).sum())
    earlier_ties = int((scores[:target] == s).sum())
    return better + earlier_ties


def metrics(ranks: Sequence[int]) -> EvalReport:
    """Summary metrics; the median is the lower median for even counts."""
    if len(ranks) == 0:
        raise ValueError("metrics need at least one rank")
    arr = np.asarray(ranks, dtype=np.int64)
    ordered = np.sort(arr)
    return EvalReport(
        ranks=tuple(int(r) for r in ranks),
        median_rank=int(ordered[(len(arr) - 1) // 2]),
        acc1=float((arr < 1).mean()),
        acc10=float((arr < 10).mean()),
        acc100=float((arr < 100).mean()),
        rank_std=float(arr.std()),
        count=len(arr),
    )


def matches_prior(word: str, word_index: int, pk: PriorKnowledge,
                  table: WordFeatureTable) -> bool:
    if pk.pos is not None and pk.pos not in table.pos_sets[word_index]:
        return False
    if pk.initial_letter is not None:
        if not word or word[0].casefold() != pk.initial_letter.casefold():
            return False
    if pk.word_length is not None and len(word) != pk.word_length:
        return False
    return True


def apply_prior_filter(ranked: Sequence[int], pk: PriorKnowledge,
                       table: WordFeatureTable, vocab: Vocabulary) -> list[int]:
    """Keep, in order, the ranked words satisfying every set field of ``pk``."""
    return [w for w in ranked if matches_prior(vocab.word(int(w)), int(w), pk, table)]


def prior_for_target(mode: str, target: int, vocab: Vocabulary,
                     table: WordFeatureTable) -> PriorKnowledge | None:
    """Prior knowledge a user who knows the target would supply; None if the
    target has nothing to offer for this mode (e.g. no POS tags)."""
    word = vocab.word(target)
    if mode == "pos":
        tags = table.pos_sets[target]
        return PriorKnowledge(pos=min(tags)) if tags else None
    if mode == "initial_letter":
        return PriorKnowledge(initial_letter=word[0]) if word else None
    if mode == "word_length":
        return PriorKnowledge(word_length=len(word))
    raise ValueError(f"unknown prior mode {mode!r}; expected one of {PRIOR_MODES}")


def filtered_rank(scores: np.ndarray, target: int, pk: PriorKnowledge,
                  table: WordFeatureTable, vocab: Vocabulary,
                  top_n: int = DEFAULT_TOP_N) -> int:
    """Rank of the target inside the filtered top-``top_n`` candidates.

    A target that misses the filtered list (filtered out, or outside the
    top-N window) gets the worst rank, the filtered list's length.
    """
    window = rank(scores)[:top_n]
    kept = apply_prior_filter(window, pk, table, vocab)
    for position, w in enumerate(kept):
        if int(w) == target:
            return position
    return len(kept)


def evaluate(params: ModelParams, vocab: Vocabulary, table: WordFeatureTable,
             feats: FeatureMatrices, config: EncoderConfig, weights: ChannelWeights,
             dataset: DefinitionDataset, prior: str | None = None,
             top_n: int = DEFAULT_TOP_N, batch_size: int = 128) -> EvalReport:
    """Score every query with dropout disabled and report the metric suite.

    With ``prior`` set, each query is re-ranked within the top-``top_n``
    window filtered by what the target itself satisfies for that mode.
    """
    if len(dataset) == 0:
        raise ValueError(f"refusing to evaluate empty dataset (split {dataset.split!r})")
    ranks: list[int] = []
    for batch in make_batches(dataset, batch_size, seed=None):
        fused = score_queries(params, batch, feats, config, weights).fused.value
        for row, target in zip(np.atleast_2d(fused), batch.targets):
            target = int(target)
            pk = prior_for_target(prior, target, vocab, table) if prior else None
            if pk is None:
                ranks.append(rank_of_target(row, target))
            else:
                ranks.append(filtered_rank(row, target, pk, table, vocab, top_n))
    return metrics(ranks)
