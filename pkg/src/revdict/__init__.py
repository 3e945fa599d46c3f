"""Multi-channel reverse dictionary.

Given a free-form description, rank vocabulary words by a fused confidence
score: a BiLSTM-attention encoder scores words directly against their
embeddings, and POS, morpheme, category, and sememe predictors add
characteristic evidence on top.
"""

from .autodiff import Graph, Node, gradient_check
from .channels import ChannelScores, ChannelWeights, FeatureMatrices, fuse, rank
from .encoder import EncoderConfig, EncoderState, attend, encode
from .evaluator import EvalReport, PriorKnowledge, apply_prior_filter, evaluate, metrics, \
    rank_of_target
from .lexicon import DefinitionDataset, QueryBatch, Vocabulary, WordFeatureTable, \
    load_dataset, load_embeddings, load_feature_table, make_batches, tokenize
from .model import ModelParams, init_params, score_queries
from .trainer import AdamState, Checkpoint, TrainConfig, adam_step, batch_loss, \
    load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "AdamState", "ChannelScores", "ChannelWeights", "Checkpoint", "DefinitionDataset",
    "EncoderConfig", "EncoderState", "EvalReport", "FeatureMatrices", "Graph",
    "ModelParams", "Node", "PriorKnowledge", "QueryBatch", "TrainConfig", "Vocabulary",
    "WordFeatureTable", "adam_step", "apply_prior_filter", "attend", "batch_loss",
    "encode", "evaluate", "fuse", "gradient_check", "init_params", "load_checkpoint",
    "load_dataset", "load_embeddings", "load_feature_table", "make_batches", "metrics",
    "rank", "rank_of_target", "save_checkpoint", "score_queries", "tokenize", "train",
]
