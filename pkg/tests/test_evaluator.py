"""Metrics, target ranking, prior-knowledge filtering, and the eval harness."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from revdict.channels import rank
from revdict.evaluator import (EvalReport, PriorKnowledge, apply_prior_filter, evaluate,
                               filtered_rank, metrics, prior_for_target, rank_of_target)
from revdict.lexicon import DefinitionDataset, Vocabulary, WordFeatureTable


def make_table(words, initials_only=False):
    n = len(words)
    return WordFeatureTable(
        pos_names=("noun", "verb"),
        morpheme_names=(), sememe_names=(), category_sizes=(),
        pos_sets=tuple(frozenset([i % 2]) for i in range(n)),
        morpheme_sets=(frozenset(),) * n,
        sememe_sets=(frozenset(),) * n,
        categories=((),) * n,
    )


class TestRankOfTarget:
    def test_top_word(self):
        assert rank_of_target(np.array([0.1, 0.9, 0.5]), 1) == 0

    def test_tie_rule_counts_earlier_indices(self):
        assert rank_of_target(np.zeros(6), 3) == 3

    def test_matches_brute_force_count(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            scores = rng.choice([0.0, 0.5, 1.0, 2.0], size=20)
            target = int(rng.integers(20))
            oracle = sum(1 for i in range(20)
                         if scores[i] > scores[target]
                         or (scores[i] == scores[target] and i < target))
            assert rank_of_target(scores, target) == oracle

    @given(st.integers(min_value=0, max_value=100_000))
    @settings(max_examples=60, deadline=None)
    def test_agrees_with_rank_position(self, seed):
        rng = np.random.default_rng(seed)
        scores = rng.choice([0.0, 0.25, 1.0], size=int(rng.integers(2, 15)))
        target = int(rng.integers(scores.shape[0]))
        position = int(np.nonzero(rank(scores) == target)[0][0])
        assert rank_of_target(scores, target) == position

    def test_out_of_range_rejected(self):
        with pytest.raises(IndexError):
            rank_of_target(np.zeros(3), 3)


class TestMetrics:
    def test_hand_case(self):
        report = metrics([0, 2, 150])
        assert report.acc1 == pytest.approx(1 / 3)
        assert report.acc10 == pytest.approx(2 / 3)
        assert report.acc100 == pytest.approx(2 / 3)
        assert report.median_rank == 2

    def test_all_zero_ranks(self):
        report = metrics([0, 0, 0])
        assert (report.acc1, report.rank_std, report.median_rank) == (1.0, 0.0, 0)

    def test_two_element_lower_median_and_population_std(self):
        report = metrics([0, 1000])
        assert report.median_rank == 0
        assert report.rank_std == pytest.approx(500.0)

    def test_singleton(self):
        report = metrics([7])
        assert report.median_rank == 7
        assert report.rank_std == 0.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            metrics([])

    @given(st.lists(st.integers(min_value=0, max_value=500), min_size=1, max_size=40))
    @settings(max_examples=60, deadline=None)
    def test_accuracy_monotone_in_k(self, ranks):
        report = metrics(ranks)
        assert report.acc1 <= report.acc10 <= report.acc100

    def test_table_text_uses_rank_variance_alias(self):
        text = metrics([0, 3]).table_text()
        assert "rank variance" in text
        assert "median rank" in text

    def test_json_round_trip(self):
        import json
        report = metrics([1, 5, 20])
        data = json.loads(report.to_json())
        assert data["median_rank"] == 5
        assert data["count"] == 3


class TestPriorKnowledge:
    def test_requires_a_field(self):
        with pytest.raises(ValueError):
            PriorKnowledge()

    def test_initial_letter_must_be_single_char(self):
        with pytest.raises(ValueError):
            PriorKnowledge(initial_letter="ab")

    def test_word_length_positive(self):
        with pytest.raises(ValueError):
            PriorKnowledge(word_length=0)


class TestApplyPriorFilter:
    def test_initial_letter(self):
        words = ("apple", "banana", "avocado")
        vocab = Vocabulary.from_words(words)
        table = make_table(words)
        kept = apply_prior_filter([0, 1, 2], PriorKnowledge(initial_letter="a"),
                                  table, vocab)
        assert [vocab.word(i) for i in kept] == ["apple", "avocado"]

    def test_word_length(self):
        words = ("freeway", "road", "highway")
        vocab = Vocabulary.from_words(words)
        table = make_table(words)
        kept = apply_prior_filter([0, 1, 2], PriorKnowledge(word_length=7), table, vocab)
        assert [vocab.word(i) for i in kept] == ["freeway", "highway"]

    def test_case_folding_on_initials(self):
        words = ("Apple", "banana")
        vocab = Vocabulary.from_words(words)
        table = make_table(words)
        kept = apply_prior_filter([0, 1], PriorKnowledge(initial_letter="a"), table, vocab)
        assert kept == [0]

    def test_pos_filter(self):
        words = ("alpha", "bravo", "carol")  # tags alternate noun/verb/noun
        vocab = Vocabulary.from_words(words)
        table = make_table(words)
        kept = apply_prior_filter([2, 1, 0], PriorKnowledge(pos=0), table, vocab)
        assert kept == [2, 0]

    def test_all_fields_must_match(self):
        words = ("apple", "angus")
        vocab = Vocabulary.from_words(words)
        table = make_table(words)
        pk = PriorKnowledge(initial_letter="a", word_length=5)
        assert apply_prior_filter([0, 1], pk, table, vocab) == [0, 1]
        pk = PriorKnowledge(initial_letter="a", word_length=6)
        assert apply_prior_filter([0, 1], pk, table, vocab) == []

    def test_order_preserved(self):
        words = tuple(f"a{i}" for i in range(6))
        vocab = Vocabulary.from_words(words)
        table = make_table(words)
        order = [5, 2, 4, 0, 1, 3]
        kept = apply_prior_filter(order, PriorKnowledge(initial_letter="a"), table, vocab)
        assert kept == order

    @given(st.integers(min_value=0, max_value=100_000))
    @settings(max_examples=60, deadline=None)
    def test_filtering_never_worsens_a_satisfying_target(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(5, 40))
        words = tuple(rng.choice(["ax", "aye", "bo", "beam", "cup"]) + str(i)
                      for i in range(n))
        vocab = Vocabulary.from_words(words)
        table = make_table(words)
        scores = rng.normal(size=n)
        target = int(rng.integers(n))
        pk = PriorKnowledge(initial_letter=words[target][0])
        unfiltered = rank_of_target(scores, target)
        filtered = filtered_rank(scores, target, pk, table, vocab, top_n=n)
        assert filtered <= unfiltered


class TestFilteredRank:
    def test_target_filtered_out_gets_worst_rank(self):
        words = ("apple", "banana", "cherry")
        vocab = Vocabulary.from_words(words)
        table = make_table(words)
        scores = np.array([3.0, 2.0, 1.0])
        r = filtered_rank(scores, 1, PriorKnowledge(initial_letter="a"), table, vocab)
        assert r == 1  # one word retained, target absent -> rank = list length

    def test_target_outside_top_n_stays_absent(self):
        words = tuple(f"a{i}" for i in range(10))
        vocab = Vocabulary.from_words(words)
        table = make_table(words)
        scores = -np.arange(10, dtype=float)  # descending by index
        r = filtered_rank(scores, 9, PriorKnowledge(initial_letter="a"), table, vocab,
                          top_n=5)
        assert r == 5

    def test_prior_for_target_modes(self):
        words = ("apple", "banana")
        vocab = Vocabulary.from_words(words)
        table = make_table(words)
        assert prior_for_target("initial_letter", 0, vocab, table).initial_letter == "a"
        assert prior_for_target("word_length", 1, vocab, table).word_length == 6
        assert prior_for_target("pos", 1, vocab, table).pos == 1
        with pytest.raises(ValueError):
            prior_for_target("zodiac", 0, vocab, table)


class TestEvaluate:
    def test_memorized_toy_model_is_perfect(self, toy_model):
        report = evaluate(toy_model.params, toy_model.data.vocab, toy_model.data.table,
                          toy_model.feats, toy_model.config.encoder,
                          toy_model.config.channels, toy_model.data.train_set)
        assert report.acc1 == 1.0
        assert report.median_rank == 0

    def test_initial_letter_prior_never_hurts(self, toy_model):
        base = evaluate(toy_model.params, toy_model.data.vocab, toy_model.data.table,
                        toy_model.feats, toy_model.config.encoder,
                        toy_model.config.channels, toy_model.data.train_set)
        prior = evaluate(toy_model.params, toy_model.data.vocab, toy_model.data.table,
                         toy_model.feats, toy_model.config.encoder,
                         toy_model.config.channels, toy_model.data.train_set,
                         prior="initial_letter")
        assert prior.acc1 >= base.acc1
        assert prior.acc10 >= base.acc10
        assert prior.acc100 >= base.acc100

    def test_deterministic_across_calls(self, toy_model):
        args = (toy_model.params, toy_model.data.vocab, toy_model.data.table,
                toy_model.feats, toy_model.config.encoder, toy_model.config.channels,
                toy_model.data.train_set)
        assert evaluate(*args).ranks == evaluate(*args).ranks

    def test_empty_testset_refused(self, toy_model):
        with pytest.raises(ValueError, match="empty"):
            evaluate(toy_model.params, toy_model.data.vocab, toy_model.data.table,
                     toy_model.feats, toy_model.config.encoder,
                     toy_model.config.channels, DefinitionDataset(entries=()))
