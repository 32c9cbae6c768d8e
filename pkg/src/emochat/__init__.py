"""Emotion-aware chat: selector plus emotion-biased seq2seq generator."""

from .autograd import (GradCheckResult, GRUCellParams, Parameter, ParameterStore, Tape,
                       Tensor, finite_diff_check, gru_cell, sgd_step)
from .config import Config
from .corpus import (EMOTIONS, ConversationPair, SyntheticSpec, Vocabulary, eip_matrix,
                     generate_synthetic, load_corpus, multi_hot)
from .checkpoint import Checkpoint, load_checkpoint, restore_model, save_checkpoint
from .evaluation import EmotionOracle, distinct_n, evaluate, response_quality
from .model import ChatModel
from .training import pretrain, train

__version__ = "0.1.0"

__all__ = [
    "ChatModel", "Checkpoint", "Config", "ConversationPair", "EmotionOracle", "EMOTIONS",
    "GradCheckResult", "GRUCellParams", "Parameter", "ParameterStore", "SyntheticSpec",
    "Tape", "Tensor", "Vocabulary", "distinct_n", "eip_matrix", "evaluate",
    "finite_diff_check", "generate_synthetic", "gru_cell", "load_checkpoint", "load_corpus",
    "multi_hot", "pretrain", "response_quality", "restore_model", "save_checkpoint",
    "sgd_step", "train",
]
