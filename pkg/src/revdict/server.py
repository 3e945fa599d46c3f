"""HTTP inference service over one immutable model snapshot.

POST /query takes {"description": str, "top_k": int?, "pos": str?,
"initial_letter": str?, "word_length": int?} and returns ranked words with
per-channel contributions that sum to each fused score. GET /health reports
liveness. The snapshot never changes after load, so any number of threads can
serve queries concurrently; reloading means restarting.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .channels import CHANNEL_ORDER, ChannelWeights, FeatureMatrices, rank
from .encoder import EncoderConfig
from .evaluator import DEFAULT_TOP_N, PriorKnowledge, apply_prior_filter
from .lexicon import EmptyQueryError, Vocabulary, WordFeatureTable, batch_from_sequences, \
    lexicon_fingerprint, load_embeddings, load_feature_table, tokenize
from .model import ModelParams, score_queries
from .trainer import Checkpoint, LexiconMismatchError, load_checkpoint

logger = logging.getLogger(__name__)

MAX_TOP_K = 1000  # aligned with the prior-knowledge candidate window


class BadRequest(ValueError):
    """Client error; maps to HTTP 400."""


@dataclass(frozen=True)
class QueryRequest:
    description: str
    top_k: int = 10
    pos: str | None = None
    initial_letter: str | None = None
    word_length: int | None = None

    @classmethod
    def from_dict(cls, data) -> "QueryRequest":
        if not isinstance(data, dict):
            raise BadRequest("request body must be a JSON object")
        description = data.get("description")
        if not isinstance(description, str) or not description.strip():
            raise BadRequest("'description' must be a non-empty string")
        top_k = data.get("top_k", 10)
        if not isinstance(top_k, int) or isinstance(top_k, bool) \
                or not 1 <= top_k <= MAX_TOP_K:
            raise BadRequest(f"'top_k' must be an integer in [1, {MAX_TOP_K}]")
        pos = data.get("pos")
        if pos is not None and not isinstance(pos, str):
            raise BadRequest("'pos' must be a string tag name")
        initial = data.get("initial_letter")
        if initial is not None and (not isinstance(initial, str) or len(initial) != 1):
            raise BadRequest("'initial_letter' must be a single character")
        length = data.get("word_length")
        if length is not None and (not isinstance(length, int) or isinstance(length, bool)
                                   or length < 1):
            raise BadRequest("'word_length' must be a positive integer")
        return cls(description=description, top_k=top_k, pos=pos,
                   initial_letter=initial, word_length=length)


@dataclass(frozen=True)
class LoadedModel:
    """Immutable snapshot assembled from a checkpoint and its lexicon files."""

    params: ModelParams
    vocab: Vocabulary
    table: WordFeatureTable
    feats: FeatureMatrices
    encoder_config: EncoderConfig
    weights: ChannelWeights
    checkpoint_id: str
    data_paths: dict[str, str] = field(default_factory=dict)


def load_model(checkpoint_path, embeddings_path=None, features_path=None) -> LoadedModel:
    """Assemble a snapshot, refusing checkpoints whose lexicon hashes mismatch."""
    ckpt: Checkpoint = load_checkpoint(checkpoint_path)
    emb_path = embeddings_path or ckpt.data_paths.get("embeddings")
    feat_path = features_path or ckpt.data_paths.get("features")
    if not emb_path or not feat_path:
        raise ValueError("embeddings and features paths are required "
                         "(not recorded in the checkpoint)")
    vocab, embeddings = load_embeddings(emb_path)
    table = load_feature_table(feat_path, vocab)
    vocab_hash = lexicon_fingerprint(vocab, embeddings)
    if vocab_hash != ckpt.vocab_hash:
        raise LexiconMismatchError(
            f"embedding file {emb_path} does not match the checkpoint "
            f"(hash {vocab_hash[:12]} != {ckpt.vocab_hash[:12]})")
    feature_hash = table.content_hash()
    if feature_hash != ckpt.feature_hash:
        raise LexiconMismatchError(
            f"feature table {feat_path} does not match the checkpoint "
            f"(hash {feature_hash[:12]} != {ckpt.feature_hash[:12]})")
    with open(checkpoint_path, "rb") as fh:
        checkpoint_id = hashlib.sha256(fh.read()).hexdigest()[:12]
    return LoadedModel(
        params=ModelParams(tensors=ckpt.tensors, embeddings=embeddings),
        vocab=vocab,
        table=table,
        feats=FeatureMatrices.from_table(table, vocab),
        encoder_config=ckpt.config.encoder,
        weights=ckpt.config.channels,
        checkpoint_id=checkpoint_id,
        data_paths={"embeddings": str(emb_path), "features": str(feat_path)},
    )


def _prior_from_request(request: QueryRequest, model: LoadedModel) -> PriorKnowledge | None:
    if request.pos is None and request.initial_letter is None \
            and request.word_length is None:
        return None
    pos_index = None
    if request.pos is not None:
        try:
            pos_index = model.table.pos_names.index(request.pos)
        except ValueError:
            raise BadRequest(
                f"unknown POS tag {request.pos!r}; known: {list(model.table.pos_names)}"
            ) from None
    return PriorKnowledge(pos=pos_index, initial_letter=request.initial_letter,
                          word_length=request.word_length)


def query(request: QueryRequest, model: LoadedModel) -> dict:
    """Tokenize, encode, score, fuse, rank, filter, truncate; explain channels."""
    try:
        tokens = tokenize(request.description, model.vocab)
    except EmptyQueryError as e:
        raise BadRequest(str(e)) from None
    pk = _prior_from_request(request, model)

    batch = batch_from_sequences([tokens])
    scores = score_queries(model.params, batch, model.feats, model.encoder_config,
                           model.weights)
    fused = scores.fused.value[0]
    per_word = {name: node.value[0] for name, node in scores.per_word.items()}

    ordering = rank(fused)
    if pk is not None:
        ordering = apply_prior_filter(ordering[:DEFAULT_TOP_N], pk, model.table, model.vocab)
    results = []
    for position, w in enumerate(ordering[: request.top_k]):
        w = int(w)
        contributions = {}
        for channel in CHANNEL_ORDER:
            lam = model.weights.of(channel)
            if channel in per_word and lam > 0.0:
                contributions[channel] = float(lam * per_word[channel][w])
            else:
                contributions[channel] = 0.0
        results.append({
            "word": model.vocab.word(w),
            "score": float(fused[w]),
            "rank": position,
            "contributions": contributions,
        })
    return {
        "results": results,
        "model": {
            "checkpoint": model.checkpoint_id,
            "vocab": len(model.vocab),
            "channels": {c: model.weights.of(c) for c in CHANNEL_ORDER},
        },
    }


class _Handler(BaseHTTPRequestHandler):
    server_version = "revdict/0.1"

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self) -> None:
        if self.path == "/health":
            model: LoadedModel = self.server.model  # type: ignore[attr-defined]
            self._send_json(200, {"status": "ok", "vocab": len(model.vocab)})
        else:
            self._send_json(404, {"error": f"no such path {self.path!r}"})

    def do_POST(self) -> None:
        if self.path != "/query":
            self._send_json(404, {"error": f"no such path {self.path!r}"})
            return
        try:
            length = int(self.headers.get("Content-Length", 0))
            raw = self.rfile.read(length)
            try:
                data = json.loads(raw.decode("utf-8"))
            except (json.JSONDecodeError, UnicodeDecodeError) as e:
                raise BadRequest(f"invalid JSON body: {e}") from None
            request = QueryRequest.from_dict(data)
            response = query(request, self.server.model)  # type: ignore[attr-defined]
            self._send_json(200, response)
        except BadRequest as e:
            self._send_json(400, {"error": str(e)})
        except Exception:  # noqa: BLE001 - service must not die on one request
            logger.exception("query failed")
            self._send_json(500, {"error": "internal error"})

    def log_message(self, format: str, *args) -> None:  # noqa: A002
        logger.debug("%s - %s", self.address_string(), format % args)


def make_server(model: LoadedModel, host: str = "127.0.0.1",
                port: int = 0) -> ThreadingHTTPServer:
    server = ThreadingHTTPServer((host, port), _Handler)
    server.model = model  # type: ignore[attr-defined]
    return server


def start_background(model: LoadedModel, host: str = "127.0.0.1",
                     port: int = 0) -> tuple[ThreadingHTTPServer, threading.Thread]:
    """Spin the server in a daemon thread; handy for tests and embedding."""
    server = make_server(model, host, port)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread


def serve(checkpoint_path, bind: str, embeddings_path=None, features_path=None) -> None:
    """Blocking entry point: load, verify, listen until interrupted."""
    host, _, port_text = bind.rpartition(":")
    if not host or not port_text.isdigit():
        raise ValueError(f"bind address must look like HOST:PORT, got {bind!r}")
    model = load_model(checkpoint_path, embeddings_path, features_path)
    server = make_server(model, host, int(port_text))
    logger.info("serving checkpoint %s on %s:%d (vocab %d)",
                model.checkpoint_id, host, int(port_text), len(model.vocab))
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
