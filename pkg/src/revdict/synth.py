"""Synthetic word/definition corpora with feature tables that match the text.

Every morpheme, sememe, category, and POS tag owns a descriptor token; a
word's definitions are shuffled sequences of its own features' descriptors
plus filler noise, so characteristic predictors have real signal to learn.
Target embeddings are noisy averages of their descriptor embeddings, which
gives the direct word channel signal too. Useful for overfit runs, ablations,
and end-to-end demos at desk scale.
"""

from __future__ import annotations

import argparse
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lexicon import (DefinitionDataset, Vocabulary, WordFeatureTable, save_dataset,
                      save_embeddings, save_feature_table, tokenize)


@dataclass(frozen=True)
class SynthConfig:
    n_train_words: int = 200
    n_unseen_words: int = 0
    defs_per_word: int = 1
    unseen_defs_per_word: int = 1
    embed_dim: int = 16
    n_morphemes: int = 30
    n_sememes: int = 30
    n_pos: int = 4
    category_sizes: tuple[int, ...] = (6,)
    n_fillers: int = 8
    fillers_per_def: int = 2
    features_per_word: int = 2
    embedding_noise: float = 0.3
    seed: int = 0


@dataclass
class SynthData:
    vocab: Vocabulary
    embeddings: np.ndarray
    table: WordFeatureTable
    train_pairs: list[tuple[str, str]]
    unseen_pairs: list[tuple[str, str]] = field(default_factory=list)

    def dataset(self, pairs: list[tuple[str, str]], split: str) -> DefinitionDataset:
        entries = [(self.vocab.index(word), tuple(tokenize(text, self.vocab)))
                   for word, text in pairs]
        return DefinitionDataset(entries=tuple(entries), split=split)

    @property
    def train_set(self) -> DefinitionDataset:
        return self.dataset(self.train_pairs, "train")

    @property
    def unseen_set(self) -> DefinitionDataset:
        return self.dataset(self.unseen_pairs, "unseen")

    def write(self, out_dir) -> dict[str, str]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "embeddings": str(out / "embeddings.txt"),
            "features": str(out / "features.jsonl"),
            "train": str(out / "train.tsv"),
            "seen": str(out / "seen.tsv"),
        }
        save_embeddings(paths["embeddings"], self.vocab, self.embeddings)
        save_feature_table(paths["features"], self.vocab, self.table)
        save_dataset(paths["train"], self.vocab, self.train_pairs)
        save_dataset(paths["seen"], self.vocab, self.train_pairs)
        if self.unseen_pairs:
            paths["unseen"] = str(out / "unseen.tsv")
            save_dataset(paths["unseen"], self.vocab, self.unseen_pairs)
        return paths


def generate(config: SynthConfig) -> SynthData:
    rng = np.random.default_rng(config.seed)
    n_words = config.n_train_words + config.n_unseen_words
    n_layers = len(config.category_sizes)

    targets = [f"w{i:04d}" for i in range(n_words)]
    mor_desc = [f"mor{i}" for i in range(config.n_morphemes)]
    sem_desc = [f"sem{i}" for i in range(config.n_sememes)]
    cat_desc = [[f"cat{k}x{j}" for j in range(size)]
                for k, size in enumerate(config.category_sizes)]
    pos_desc = [f"pos{i}" for i in range(config.n_pos)]
    fillers = [f"fill{i}" for i in range(config.n_fillers)]
    words = targets + mor_desc + sem_desc + [w for layer in cat_desc for w in layer] \
        + pos_desc + fillers
    vocab = Vocabulary.from_words(words)

    d = config.embed_dim
    embeddings = rng.normal(0.0, 1.0 / np.sqrt(d), size=(len(words), d))

    # feature assignments per target word
    mor_sets, sem_sets, pos_sets, categories = [], [], [], []
    for _ in range(n_words):
        mor_sets.append(frozenset(
            int(j) for j in rng.choice(config.n_morphemes, config.features_per_word,
                                       replace=False)))
        sem_sets.append(frozenset(
            int(j) for j in rng.choice(config.n_sememes, config.features_per_word,
                                       replace=False)))
        pos_sets.append(frozenset([int(rng.integers(config.n_pos))])
                        if config.n_pos else frozenset())
        categories.append(tuple(int(rng.integers(size)) for size in config.category_sizes))

    # target embedding = mean of its descriptor embeddings + noise
    for i in range(n_words):
        rows = [embeddings[vocab.index(mor_desc[j])] for j in sorted(mor_sets[i])]
        rows += [embeddings[vocab.index(sem_desc[j])] for j in sorted(sem_sets[i])]
        rows += [embeddings[vocab.index(cat_desc[k][categories[i][k]])]
                 for k in range(n_layers)]
        mean = np.mean(rows, axis=0)
        noise = rng.normal(0.0, config.embedding_noise / np.sqrt(d), size=d)
        embeddings[i] = mean + noise
    embeddings.flags.writeable = False

    empty = frozenset()
    none_cats = (None,) * n_layers
    n_rest = len(words) - n_words
    table = WordFeatureTable(
        pos_names=tuple(f"tag{i}" for i in range(config.n_pos)),
        morpheme_names=tuple(mor_desc),
        sememe_names=tuple(sem_desc),
        category_sizes=tuple(config.category_sizes),
        pos_sets=tuple(pos_sets) + (empty,) * n_rest,
        morpheme_sets=tuple(mor_sets) + (empty,) * n_rest,
        sememe_sets=tuple(sem_sets) + (empty,) * n_rest,
        categories=tuple(categories) + (none_cats,) * n_rest,
    )

    def make_definition(i: int) -> str:
        tokens = [mor_desc[j] for j in sorted(mor_sets[i])]
        tokens += [sem_desc[j] for j in sorted(sem_sets[i])]
        tokens += [cat_desc[k][categories[i][k]] for k in range(n_layers)]
        if config.n_pos:
            tokens += [pos_desc[min(pos_sets[i])]]
        if config.fillers_per_def:
            tokens += [fillers[int(j)]
                       for j in rng.integers(config.n_fillers, size=config.fillers_per_def)]
        rng.shuffle(tokens)
        return " ".join(tokens)

    train_pairs = [(targets[i], make_definition(i))
                   for i in range(config.n_train_words)
                   for _ in range(config.defs_per_word)]
    unseen_pairs = [(targets[i], make_definition(i))
                    for i in range(config.n_train_words, n_words)
                    for _ in range(config.unseen_defs_per_word)]
    return SynthData(vocab=vocab, embeddings=embeddings, table=table,
                     train_pairs=train_pairs, unseen_pairs=unseen_pairs)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="generate a toy corpus")
    parser.add_argument("out_dir")
    parser.add_argument("--words", type=int, default=200)
    parser.add_argument("--unseen-words", type=int, default=0)
    parser.add_argument("--defs-per-word", type=int, default=1)
    parser.add_argument("--embed-dim", type=int, default=16)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    data = generate(SynthConfig(
        n_train_words=args.words, n_unseen_words=args.unseen_words,
        defs_per_word=args.defs_per_word, embed_dim=args.embed_dim, seed=args.seed))
    paths = data.write(args.out_dir)
    print(json.dumps(paths, indent=2))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
