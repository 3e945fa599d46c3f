"""Vocabulary, embeddings, word feature tables, datasets, and batching.

File formats:
  embeddings   text, header "<count> <dim>", then "word v1 .. vd" per line
  feature table JSON-lines, first line the registries, then per-word records
  datasets     UTF-8 TSV, "word<TAB>definition text"

Everything loaded here is immutable afterwards and safe to share.
"""

from __future__ import annotations

import hashlib
import json
import logging
import string
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

PAD_INDEX = -1  # padding slot in token matrices; zero embedding, mask 0

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


class ParseError(ValueError):
    """Malformed input file; carries the offending line number."""

    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.line_no = line_no


class ValidationError(ValueError):
    """Loaded record violates a registry or range constraint."""


class EmptyQueryError(ValueError):
    """Query text left no tokens after normalization."""


@dataclass(frozen=True)
class Vocabulary:
    """Bijective word/index mapping; the UNK index sits just past the words."""

    words: tuple[str, ...]
    index_of: dict[str, int] = field(repr=False)

    @classmethod
    def from_words(cls, words: Sequence[str]) -> "Vocabulary":
        index_of = {}
        for i, w in enumerate(words):
            if w in index_of:
                raise ValueError(f"duplicate word {w!r}")
            index_of[w] = i
        return cls(words=tuple(words), index_of=index_of)

    def __len__(self) -> int:
        return len(self.words)

    @property
    def unk_index(self) -> int:
        return len(self.words)

    def index(self, word: str) -> int | None:
        return self.index_of.get(word)

    def word(self, index: int) -> str:
        return self.words[index]


def lexicon_fingerprint(vocab: Vocabulary, embeddings: np.ndarray) -> str:
    """Hash tying a checkpoint to the exact vocabulary and embedding rows."""
    h = hashlib.sha256()
    h.update("\n".join(vocab.words).encode("utf-8"))
    h.update(np.ascontiguousarray(embeddings, dtype=np.float64).tobytes())
    return h.hexdigest()


def load_embeddings(path) -> tuple[Vocabulary, np.ndarray]:
    """Read the embedding file; row order defines the vocabulary order."""
    words: list[str] = []
    seen: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        parts = header.split()
        if len(parts) != 2:
            raise ParseError(path, 1, f"expected header '<count> <dim>', got {header!r}")
        try:
            count, dim = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(path, 1, f"non-integer header fields in {header!r}") from None
        if count < 1 or dim < 1:
            raise ParseError(path, 1, f"count and dim must be positive, got {count} {dim}")
        matrix = np.zeros((count, dim), dtype=np.float64)
        for row, line in enumerate(fh):
            line_no = row + 2
            if row >= count:
                if line.strip():
                    raise ParseError(path, line_no, f"more than {count} rows")
                continue
            fields = line.split()
            if len(fields) != dim + 1:
                raise ParseError(path, line_no,
                                 f"expected word + {dim} floats, got {len(fields)} fields")
            word = fields[0]
            if word in seen:
                raise ParseError(path, line_no,
                                 f"duplicate word {word!r} (first at line {seen[word]})")
            seen[word] = line_no
            try:
                matrix[row] = [float(x) for x in fields[1:]]
            except ValueError:
                raise ParseError(path, line_no, "non-numeric embedding value") from None
            words.append(word)
    if len(words) != count:
        raise ParseError(path, len(words) + 1, f"header promised {count} rows, found {len(words)}")
    matrix.flags.writeable = False
    return Vocabulary.from_words(words), matrix


def save_embeddings(path, vocab: Vocabulary, matrix: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(vocab)} {matrix.shape[1]}\n")
        for word, row in zip(vocab.words, matrix):
            fh.write(word + " " + " ".join(repr(float(x)) for x in row) + "\n")


@dataclass(frozen=True)
class WordFeatureTable:
    """Per-word characteristic sets plus the registries they index into.

    ``categories[w][k]`` is the word's category index at layer k or None; the
    other feature fields are (possibly empty) frozen index sets. Channel
    availability is data-driven: an empty registry disables that channel.
    """

    pos_names: tuple[str, ...]
    morpheme_names: tuple[str, ...]
    sememe_names: tuple[str, ...]
    category_sizes: tuple[int, ...]
    pos_sets: tuple[frozenset[int], ...]
    morpheme_sets: tuple[frozenset[int], ...]
    sememe_sets: tuple[frozenset[int], ...]
    categories: tuple[tuple[int | None, ...], ...]
    skipped_words: int = 0

    @property
    def n_layers(self) -> int:
        return len(self.category_sizes)

    def content_hash(self) -> str:
        payload = json.dumps(
            {
                "pos": self.pos_names,
                "morphemes": self.morpheme_names,
                "sememes": self.sememe_names,
                "category_layers": self.category_sizes,
                "records": [
                    [sorted(p), sorted(m), list(c), sorted(s)]
                    for p, m, c, s in zip(self.pos_sets, self.morpheme_sets,
                                          self.categories, self.sememe_sets)
                ],
            },
            sort_keys=True, separators=(",", ":"), default=list,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _check_indices(word: str, feature: str, indices: Iterable[int], limit: int) -> frozenset[int]:
    out = set()
    for i in indices:
        if not isinstance(i, int) or i < 0 or i >= limit:
            raise ValidationError(f"word {word!r}: {feature} index {i} out of range [0, {limit})")
        out.add(i)
    return frozenset(out)


def load_feature_table(path, vocab: Vocabulary) -> WordFeatureTable:
    """Parse the JSON-lines feature table and validate every index."""
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
        try:
            registry = json.loads(first)
        except json.JSONDecodeError as e:
            raise ParseError(path, 1, f"registry line is not valid JSON: {e}") from None
        for key in ("pos", "morphemes", "sememes", "category_layers"):
            if key not in registry:
                raise ParseError(path, 1, f"registry missing {key!r}")
        pos_names = tuple(registry["pos"])
        morpheme_names = tuple(registry["morphemes"])
        sememe_names = tuple(registry["sememes"])
        category_sizes = tuple(int(c) for c in registry["category_layers"])
        if any(c <= 0 for c in category_sizes):
            raise ParseError(path, 1, f"category layer sizes must be positive, got {category_sizes}")
        n_layers = len(category_sizes)

        n = len(vocab)
        pos_sets: list[frozenset[int]] = [frozenset()] * n
        mor_sets: list[frozenset[int]] = [frozenset()] * n
        sem_sets: list[frozenset[int]] = [frozenset()] * n
        categories: list[tuple[int | None, ...]] = [(None,) * n_layers] * n
        skipped = 0

        for line_no, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(path, line_no, f"invalid JSON: {e}") from None
            word = rec.get("word")
            widx = vocab.index(word) if isinstance(word, str) else None
            if widx is None:
                logger.warning("%s:%d: word %r not in vocabulary, record skipped",
                               path, line_no, word)
                skipped += 1
                continue
            pos_sets[widx] = _check_indices(word, "pos", rec.get("pos", []), len(pos_names))
            mor_sets[widx] = _check_indices(word, "morpheme", rec.get("mor", []),
                                            len(morpheme_names))
            sem_sets[widx] = _check_indices(word, "sememe", rec.get("sem", []),
                                            len(sememe_names))
            cat = rec.get("cat")
            if cat is None:
                cat = [None] * n_layers
            if len(cat) != n_layers:
                raise ValidationError(
                    f"word {word!r}: expected {n_layers} category entries, got {len(cat)}")
            row = []
            for k, c in enumerate(cat):
                if c is None:
                    row.append(None)
                    continue
                if not isinstance(c, int) or c < 0 or c >= category_sizes[k]:
                    raise ValidationError(
                        f"word {word!r}: category index {c} out of range for layer {k}"
                        f" of size {category_sizes[k]}")
                row.append(c)
            categories[widx] = tuple(row)

    return WordFeatureTable(
        pos_names=pos_names,
        morpheme_names=morpheme_names,
        sememe_names=sememe_names,
        category_sizes=category_sizes,
        pos_sets=tuple(pos_sets),
        morpheme_sets=tuple(mor_sets),
        sememe_sets=tuple(sem_sets),
        categories=tuple(categories),
        skipped_words=skipped,
    )


def save_feature_table(path, vocab: Vocabulary, table: WordFeatureTable) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({
            "pos": list(table.pos_names),
            "morphemes": list(table.morpheme_names),
            "sememes": list(table.sememe_names),
            "category_layers": list(table.category_sizes),
        }) + "\n")
        for i, word in enumerate(vocab.words):
            fh.write(json.dumps({
                "word": word,
                "pos": sorted(table.pos_sets[i]),
                "mor": sorted(table.morpheme_sets[i]),
                "cat": list(table.categories[i]),
                "sem": sorted(table.sememe_sets[i]),
            }) + "\n")


def tokenize(text: str, vocab: Vocabulary) -> list[int]:
    """Lowercase, split on whitespace, strip ASCII punctuation, map OOV to UNK."""
    indices = []
    for raw in text.lower().split():
        token = raw.translate(_PUNCT_TABLE)
        if not token:
            continue
        idx = vocab.index(token)
        indices.append(idx if idx is not None else vocab.unk_index)
    if not indices:
        raise EmptyQueryError(f"no tokens left after normalizing {text!r}")
    return indices


@dataclass(frozen=True)
class DefinitionDataset:
    """Pairs of (target word index, token index sequence) for one split."""

    entries: tuple[tuple[int, tuple[int, ...]], ...]
    split: str = "train"
    rejected: int = 0

    def __len__(self) -> int:
        return len(self.entries)


def load_dataset(path, vocab: Vocabulary, split: str = "train") -> DefinitionDataset:
    entries = []
    rejected = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise ParseError(path, line_no, "expected 'word<TAB>definition'")
            word, definition = line.split("\t", 1)
            target = vocab.index(word)
            if target is None:
                logger.warning("%s:%d: target %r not in vocabulary, pair rejected",
                               path, line_no, word)
                rejected += 1
                continue
            try:
                tokens = tokenize(definition, vocab)
            except EmptyQueryError:
                logger.warning("%s:%d: empty definition for %r, pair rejected",
                               path, line_no, word)
                rejected += 1
                continue
            entries.append((target, tuple(tokens)))
    if rejected:
        logger.warning("%s: rejected %d of %d pairs", path, rejected, rejected + len(entries))
    return DefinitionDataset(entries=tuple(entries), split=split, rejected=rejected)


def save_dataset(path, vocab: Vocabulary, pairs: Iterable[tuple[str, str]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for word, definition in pairs:
            fh.write(f"{word}\t{definition}\n")


@dataclass(frozen=True)
class QueryBatch:
    """Padded token matrix plus lengths and the matching 0/1 mask."""

    tokens: np.ndarray   # (B, T) int64, PAD_INDEX in unused slots
    lengths: np.ndarray  # (B,) int64, all >= 1
    mask: np.ndarray     # (B, T) float64, mask[i][t] = 1 iff t < lengths[i]
    targets: np.ndarray | None = None  # (B,) int64

    @property
    def size(self) -> int:
        return self.tokens.shape[0]


def batch_from_sequences(sequences: Sequence[Sequence[int]],
                         targets: Sequence[int] | None = None) -> QueryBatch:
    if not sequences:
        raise ValueError("cannot batch zero sequences")
    lengths = np.array([len(s) for s in sequences], dtype=np.int64)
    if lengths.min() < 1:
        raise ValueError("sequences must be non-empty")
    width = int(lengths.max())
    tokens = np.full((len(sequences), width), PAD_INDEX, dtype=np.int64)
    for i, seq in enumerate(sequences):
        tokens[i, : len(seq)] = seq
    mask = (np.arange(width)[None, :] < lengths[:, None]).astype(np.float64)
    tgt = None if targets is None else np.asarray(targets, dtype=np.int64)
    return QueryBatch(tokens=tokens, lengths=lengths, mask=mask, targets=tgt)


def make_batches(dataset: DefinitionDataset, batch_size: int,
                 seed: int | None = None) -> list[QueryBatch]:
    """Split the dataset into batches; ``seed`` drives the per-epoch shuffle.

    ``seed=None`` keeps the dataset order (evaluation). The last partial batch
    is kept.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    order = np.arange(len(dataset.entries))
    if seed is not None:
        order = np.random.default_rng(seed).permutation(order)
    batches = []
    for start in range(0, len(order), batch_size):
        chunk = order[start : start + batch_size]
        seqs = [dataset.entries[i][1] for i in chunk]
        tgts = [dataset.entries[i][0] for i in chunk]
        batches.append(batch_from_sequences(seqs, tgts))
    return batches


def embed_batch(batch: QueryBatch, embeddings: np.ndarray) -> np.ndarray:
    """Look up token embeddings; PAD and UNK rows stay zero."""
    n, dim = embeddings.shape
    out = np.zeros((*batch.tokens.shape, dim), dtype=np.float64)
    known = (batch.tokens >= 0) & (batch.tokens < n)
    out[known] = embeddings[batch.tokens[known]]
    return out
