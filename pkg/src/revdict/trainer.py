"""Loss computation, Adam optimization, the training loop, and checkpoints.

Checkpoint container: magic "MCRD", format version u32, length-prefixed
sections (one UTF-8 JSON header, then one section per tensor: name, shape,
little-endian float64 data), trailing CRC32 over everything before it.
Serialization is canonical, so load followed by save is byte-identical.
"""

from __future__ import annotations

import io
import json
import logging
import struct
import time
import zlib
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from .autodiff import Graph, Node, mean_all, sigmoid_cross_entropy_sum, softmax_cross_entropy
from .channels import ChannelWeights, FeatureMatrices
from .encoder import EncoderConfig
from .lexicon import DefinitionDataset, QueryBatch, Vocabulary, WordFeatureTable, \
    lexicon_fingerprint, make_batches
from .model import ModelParams, init_params, register_params, score_batch

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"MCRD"
CHECKPOINT_VERSION = 1

LOSS_MODES = ("softmax", "one_vs_all")


class TrainingDivergedError(RuntimeError):
    """Loss or gradients went non-finite; carries the partial checkpoint."""

    def __init__(self, message: str, checkpoint: "Checkpoint | None" = None):
        super().__init__(message)
        self.checkpoint = checkpoint


class IntegrityError(ValueError):
    """Checkpoint file is corrupt, truncated, or not a checkpoint at all."""


class LexiconMismatchError(ValueError):
    """Checkpoint was trained against different vocabulary or feature data."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 128
    epochs: int = 10
    seed: int = 0
    loss_mode: str = "softmax"
    grad_clip: float | None = None
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    channels: ChannelWeights = field(default_factory=ChannelWeights)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch size must be >= 1, got {self.batch_size}")
        if self.loss_mode not in LOSS_MODES:
            raise ValueError(f"loss_mode must be one of {LOSS_MODES}, got {self.loss_mode!r}")

    @property
    def dropout(self) -> float:
        return self.encoder.dropout

    def to_dict(self) -> dict[str, Any]:
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "seed": self.seed,
            "loss_mode": self.loss_mode,
            "grad_clip": self.grad_clip,
            "encoder": {
                "embed_dim": self.encoder.embed_dim,
                "hidden_dim": self.encoder.hidden_dim,
                "attention": self.encoder.attention,
                "dropout": self.encoder.dropout,
            },
            "channels": {
                "word": self.channels.word,
                "pos": self.channels.pos,
                "morpheme": self.channels.morpheme,
                "category": self.channels.category,
                "sememe": self.channels.sememe,
                "category_layers": list(self.channels.category_layers),
            },
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TrainConfig":
        enc = data.get("encoder", {})
        ch = data.get("channels", {})
        return cls(
            learning_rate=data.get("learning_rate", 0.001),
            batch_size=data.get("batch_size", 128),
            epochs=data.get("epochs", 10),
            seed=data.get("seed", 0),
            loss_mode=data.get("loss_mode", data.get("loss", "softmax")),
            grad_clip=data.get("grad_clip"),
            encoder=EncoderConfig(
                embed_dim=enc.get("embed_dim", 300),
                hidden_dim=enc.get("hidden_dim", 300),
                attention=enc.get("attention", "literal"),
                dropout=enc.get("dropout", data.get("dropout", 0.5)),
            ),
            channels=ChannelWeights(
                word=ch.get("word", 1.0),
                pos=ch.get("pos", 1.0),
                morpheme=ch.get("morpheme", 1.0),
                category=ch.get("category", 1.0),
                sememe=ch.get("sememe", 1.0),
                category_layers=tuple(ch.get("category_layers", ())),
            ),
        )


@dataclass
class AdamState:
    """First/second moment estimates with the usual constants."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, tensors: dict[str, np.ndarray]) -> "AdamState":
        return cls(m={k: np.zeros_like(t) for k, t in tensors.items()},
                   v={k: np.zeros_like(t) for k, t in tensors.items()})


def adam_step(tensors: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update, in place. Embeddings are never in here."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError(f"non-finite gradient in {name!r}")
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for name, g in grads.items():
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        tensors[name] -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients down to a global norm of ``max_norm``; returns the norm."""
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    if total > max_norm and total > 0:
        factor = max_norm / total
        for g in grads.values():
            g *= factor
    return total


def batch_loss(batch: QueryBatch, params: ModelParams, feats: FeatureMatrices,
               config: TrainConfig, training: bool = False,
               rng: np.random.Generator | None = None) -> Node:
    """Mean loss over the batch as a scalar graph node.

    Softmax mode treats the fused scores as class logits over the vocabulary;
    one-vs-all mode sums per-word binary cross-entropies against the one-hot
    target instead.
    """
    if batch.targets is None or batch.size == 0:
        raise ValueError("batch_loss needs a non-empty batch with targets")
    graph = Graph()
    param_nodes = register_params(graph, params)
    scores, _ = score_batch(graph, params, param_nodes, batch, feats,
                            config.encoder, config.channels, training, rng)
    if config.loss_mode == "softmax":
        per_example = softmax_cross_entropy(scores.fused, batch.targets)
    else:
        per_example = sigmoid_cross_entropy_sum(scores.fused, batch.targets)
    return mean_all(per_example)


@dataclass
class Checkpoint:
    """Everything needed to resume or serve: weights, optimizer, provenance."""

    tensors: dict[str, np.ndarray]
    adam: AdamState
    config: TrainConfig
    vocab_hash: str
    feature_hash: str
    epoch: int
    rng_state: dict[str, Any]
    data_paths: dict[str, str] = field(default_factory=dict)


def _pack_tensor(name: str, array: np.ndarray) -> bytes:
    body = io.BytesIO()
    encoded = name.encode("utf-8")
    body.write(struct.pack("<I", len(encoded)))
    body.write(encoded)
    body.write(struct.pack("<I", array.ndim))
    body.write(struct.pack(f"<{array.ndim}I", *array.shape))
    body.write(np.ascontiguousarray(array, dtype="<f8").tobytes())
    return body.getvalue()


def _unpack_tensor(payload: bytes) -> tuple[str, np.ndarray]:
    view = memoryview(payload)
    (name_len,) = struct.unpack_from("<I", view, 0)
    offset = 4
    name = bytes(view[offset : offset + name_len]).decode("utf-8")
    offset += name_len
    (ndim,) = struct.unpack_from("<I", view, offset)
    offset += 4
    shape = struct.unpack_from(f"<{ndim}I", view, offset)
    offset += 4 * ndim
    array = np.frombuffer(view[offset:], dtype="<f8").reshape(shape).astype(np.float64)
    return name, array


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", CHECKPOINT_VERSION))
    header = {
        "config": ckpt.config.to_dict(),
        "vocab_hash": ckpt.vocab_hash,
        "feature_hash": ckpt.feature_hash,
        "epoch": ckpt.epoch,
        "rng_state": ckpt.rng_state,
        "adam_step": ckpt.adam.step,
        "data_paths": ckpt.data_paths,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    buf.write(struct.pack("<I", len(header_bytes)))
    buf.write(header_bytes)
    sections = []
    for name in sorted(ckpt.tensors):
        sections.append(_pack_tensor(name, ckpt.tensors[name]))
    for name in sorted(ckpt.adam.m):
        sections.append(_pack_tensor(f"adam.m.{name}", ckpt.adam.m[name]))
    for name in sorted(ckpt.adam.v):
        sections.append(_pack_tensor(f"adam.v.{name}", ckpt.adam.v[name]))
    buf.write(struct.pack("<I", len(sections)))
    for section in sections:
        buf.write(struct.pack("<I", len(section)))
        buf.write(section)
    payload = buf.getvalue()
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(payload)
        fh.write(struct.pack("<I", crc))


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:4] != CHECKPOINT_MAGIC:
        raise IntegrityError(f"{path}: not a checkpoint file")
    payload, crc_bytes = blob[:-4], blob[-4:]
    (stored_crc,) = struct.unpack("<I", crc_bytes)
    if zlib.crc32(payload) & 0xFFFFFFFF != stored_crc:
        raise IntegrityError(f"{path}: checksum mismatch, file is corrupt")
    try:
        (version,) = struct.unpack_from("<I", payload, 4)
        if version != CHECKPOINT_VERSION:
            raise IntegrityError(f"{path}: unsupported format version {version}")
        offset = 8
        (header_len,) = struct.unpack_from("<I", payload, offset)
        offset += 4
        header = json.loads(payload[offset : offset + header_len].decode("utf-8"))
        offset += header_len
        (n_sections,) = struct.unpack_from("<I", payload, offset)
        offset += 4
        tensors: dict[str, np.ndarray] = {}
        for _ in range(n_sections):
            (section_len,) = struct.unpack_from("<I", payload, offset)
            offset += 4
            name, array = _unpack_tensor(payload[offset : offset + section_len])
            offset += section_len
            tensors[name] = array
        if offset != len(payload):
            raise IntegrityError(f"{path}: trailing bytes after last section")
    except (struct.error, IndexError, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise IntegrityError(f"{path}: truncated or malformed checkpoint ({e})") from None

    model_tensors = {}
    adam_m = {}
    adam_v = {}
    for name, array in tensors.items():
        if name.startswith("adam.m."):
            adam_m[name[len("adam.m.") :]] = array
        elif name.startswith("adam.v."):
            adam_v[name[len("adam.v.") :]] = array
        else:
            model_tensors[name] = array
    adam = AdamState(m=adam_m, v=adam_v, step=header["adam_step"])
    return Checkpoint(
        tensors=model_tensors,
        adam=adam,
        config=TrainConfig.from_dict(header["config"]),
        vocab_hash=header["vocab_hash"],
        feature_hash=header["feature_hash"],
        epoch=header["epoch"],
        rng_state=header["rng_state"],
        data_paths=header.get("data_paths", {}),
    )


def _quick_accuracy(params: ModelParams, dataset: DefinitionDataset,
                    feats: FeatureMatrices, config: TrainConfig) -> tuple[float, float]:
    """acc@1 and acc@10 with dropout off; used for the per-epoch log."""
    from .evaluator import rank_of_target  # local import to avoid a cycle
    from .model import score_queries

    hits1 = hits10 = total = 0
    for batch in make_batches(dataset, config.batch_size, seed=None):
        fused = score_queries(params, batch, feats, config.encoder, config.channels).fused.value
        for row, target in zip(fused, batch.targets):
            r = rank_of_target(row, int(target))
            hits1 += r < 1
            hits10 += r < 10
            total += 1
    return hits1 / total, hits10 / total


def train(config: TrainConfig, dataset: DefinitionDataset, vocab: Vocabulary,
          embeddings: np.ndarray, table: WordFeatureTable,
          eval_dataset: DefinitionDataset | None = None,
          data_paths: dict[str, str] | None = None) -> tuple[Checkpoint, list[dict[str, Any]]]:
    """Full training run; deterministic for a fixed seed on one machine.

    Returns the final checkpoint and one log record per epoch. Raises
    ``TrainingDivergedError`` with the partial checkpoint attached if the loss
    or any gradient goes non-finite.
    """
    if len(dataset) == 0:
        raise ValueError("training dataset is empty")
    feats = FeatureMatrices.from_table(table, vocab)
    params = init_params(config.encoder, table, embeddings, config.seed)
    adam = AdamState.init(params.tensors)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    vocab_hash = lexicon_fingerprint(vocab, embeddings)
    feature_hash = table.content_hash()
    eval_set = eval_dataset if eval_dataset is not None else dataset

    def snapshot(epoch: int) -> Checkpoint:
        return Checkpoint(
            tensors=params.tensors, adam=adam, config=config,
            vocab_hash=vocab_hash, feature_hash=feature_hash, epoch=epoch,
            rng_state=rng.bit_generator.state, data_paths=dict(data_paths or {}),
        )

    log: list[dict[str, Any]] = []
    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        shuffle_seed = int(rng.integers(0, 2**63 - 1))
        epoch_loss = 0.0
        examples = 0
        for batch in make_batches(dataset, config.batch_size, seed=shuffle_seed):
            loss = batch_loss(batch, params, feats, config, training=True, rng=rng)
            value = float(loss.value)
            if not np.isfinite(value):
                raise TrainingDivergedError(
                    f"loss became non-finite at epoch {epoch}", checkpoint=snapshot(epoch - 1))
            loss.graph.backward(loss)
            grads = loss.graph.parameter_gradients()
            if config.grad_clip is not None:
                clip_gradients(grads, config.grad_clip)
            try:
                adam_step(params.tensors, grads, adam, config.learning_rate)
            except TrainingDivergedError as e:
                raise TrainingDivergedError(str(e), checkpoint=snapshot(epoch - 1)) from None
            epoch_loss += value * batch.size
            examples += batch.size
        acc1, acc10 = _quick_accuracy(params, eval_set, feats, config)
        entry = {
            "epoch": epoch,
            "loss": epoch_loss / examples,
            "acc1": acc1,
            "acc10": acc10,
            "seconds": time.perf_counter() - started,
        }
        log.append(entry)
        logger.info("epoch %d: loss %.4f acc@1 %.3f acc@10 %.3f",
                    epoch, entry["loss"], acc1, acc10)
    return snapshot(config.epochs), log
