"""Command-line entry points: train, eval, query, serve."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import server as server_mod
from .channels import FeatureMatrices
from .evaluator import PRIOR_MODES, evaluate
from .lexicon import ParseError, ValidationError, load_dataset, load_embeddings, \
    load_feature_table
from .trainer import IntegrityError, LexiconMismatchError, TrainConfig, \
    TrainingDivergedError, save_checkpoint, train

logger = logging.getLogger(__name__)


def _setup_logging() -> None:
    level = os.environ.get("MCRD_LOG", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def cmd_train(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    config = TrainConfig.from_dict(raw)
    if args.seed is not None:
        config = TrainConfig.from_dict({**config.to_dict(), "seed": args.seed})
    data = raw.get("data", {})
    for key in ("embeddings", "features", "train"):
        if key not in data:
            print(f"config error: data.{key} path missing", file=sys.stderr)
            return 1
    vocab, embeddings = load_embeddings(data["embeddings"])
    table = load_feature_table(data["features"], vocab)
    train_set = load_dataset(data["train"], vocab, split="train")
    eval_set = load_dataset(data["seen"], vocab, split="seen") if "seen" in data else None
    checkpoint_path = args.out or raw.get("checkpoint", "model.mcrd")
    try:
        ckpt, log = train(config, train_set, vocab, embeddings, table, eval_set,
                          data_paths={"embeddings": data["embeddings"],
                                      "features": data["features"]})
    except TrainingDivergedError as e:
        if e.checkpoint is not None:
            save_checkpoint(e.checkpoint, checkpoint_path + ".partial")
            print(f"training diverged: {e}; partial checkpoint saved to "
                  f"{checkpoint_path}.partial", file=sys.stderr)
        else:
            print(f"training diverged: {e}", file=sys.stderr)
        return 1
    save_checkpoint(ckpt, checkpoint_path)
    log_path = raw.get("log", checkpoint_path + ".log.jsonl")
    with open(log_path, "w", encoding="utf-8") as fh:
        for entry in log:
            fh.write(json.dumps(entry) + "\n")
    last = log[-1]
    print(f"trained {config.epochs} epochs: loss {last['loss']:.4f} "
          f"acc@1 {last['acc1']:.3f} acc@10 {last['acc10']:.3f}")
    print(f"checkpoint written to {checkpoint_path}")
    return 0


def cmd_eval(args) -> int:
    model = server_mod.load_model(args.checkpoint, args.embeddings, args.features)
    dataset = load_dataset(args.testset, model.vocab, split="test")
    prior = args.prior.replace("-", "_") if args.prior else None
    report = evaluate(model.params, model.vocab, model.table, model.feats,
                      model.encoder_config, model.weights, dataset, prior=prior)
    if args.json:
        print(report.to_json())
    else:
        print(report.table_text())
    return 0


def cmd_query(args) -> int:
    model = server_mod.load_model(args.checkpoint, args.embeddings, args.features)
    request = server_mod.QueryRequest.from_dict({
        "description": args.description,
        "top_k": args.top_k,
        "pos": args.pos,
        "initial_letter": args.initial_letter,
        "word_length": args.word_length,
    })
    response = server_mod.query(request, model)
    for entry in response["results"]:
        contribs = " ".join(f"{k}={v:+.4f}" for k, v in entry["contributions"].items()
                            if v != 0.0)
        print(f"{entry['rank']:>4}  {entry['word']:<24} {entry['score']:+.4f}  {contribs}")
    if not response["results"]:
        print("(no words match the given filters)")
    return 0


def cmd_serve(args) -> int:
    server_mod.serve(args.checkpoint, args.bind, args.embeddings, args.features)
    return 0


def _add_model_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--checkpoint", required=True, help="checkpoint file (.mcrd)")
    parser.add_argument("--embeddings", default=None,
                        help="embedding file (defaults to the path recorded at training)")
    parser.add_argument("--features", default=None,
                        help="feature table (defaults to the path recorded at training)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="revdict",
        description="multi-channel reverse dictionary: train, evaluate, query, serve")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model from a JSON config")
    p_train.add_argument("--config", required=True, help="JSON config path")
    p_train.add_argument("--seed", type=int, default=None, help="override config seed")
    p_train.add_argument("--out", default=None, help="checkpoint output path")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a test set")
    _add_model_args(p_eval)
    p_eval.add_argument("--testset", required=True, help="TSV test set")
    p_eval.add_argument("--prior", choices=[m.replace("_", "-") for m in PRIOR_MODES],
                        default=None, help="re-rank with this prior knowledge of the target")
    p_eval.add_argument("--json", action="store_true", help="print the JSON report")
    p_eval.set_defaults(func=cmd_eval)

    p_query = sub.add_parser("query", help="rank words for one description")
    _add_model_args(p_query)
    p_query.add_argument("description", help="the description text")
    p_query.add_argument("--top-k", type=int, default=10, dest="top_k")
    p_query.add_argument("--pos", default=None, help="POS tag the target must carry")
    p_query.add_argument("--initial-letter", default=None, dest="initial_letter")
    p_query.add_argument("--word-length", type=int, default=None, dest="word_length")
    p_query.set_defaults(func=cmd_query)

    p_serve = sub.add_parser("serve", help="run the HTTP inference service")
    _add_model_args(p_serve)
    p_serve.add_argument("--bind", default="127.0.0.1:8080", help="HOST:PORT")
    p_serve.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError, IntegrityError, LexiconMismatchError,
            FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
