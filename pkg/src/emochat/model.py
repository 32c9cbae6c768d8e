"""Whole-model assembly: selector and generator wired per run mode.

Modes:
  seq2seq      plain attention seq2seq; no emotion parameters at all
  seq2seq_emb  emotion-shaped generator driven by a designated one-hot
               response emotion (the labeled primary category); no selector
  eacm         selector output drives the generator; the combined loss
               trains both ends jointly and gradients flow from the
               sequence loss back into the selector through the bias vector
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from . import generator as gen
from . import selector as sel
from .autograd import ParameterStore, Tensor
from .config import Config
from .corpus import EMOTION_INDEX, ConversationPair, Vocabulary, multi_hot
from .selector import N_EMOTIONS


@dataclass
class PairLosses:
    emotion: Tensor | None  # post-recovery + response-prediction loss; None outside eacm
    seq2seq: Tensor  # per-token cross-entropy
    response_emotion: Tensor | None


class ChatModel:
    def __init__(self, config: Config, vocab: Vocabulary, dtype=np.float32):
        config.validate()
        self.config = config
        self.vocab = vocab
        self.store = ParameterStore(seed=config.seed, dtype=dtype)
        emotion_shaped = config.mode in ("seq2seq_emb", "eacm")
        self.selector = None
        if config.mode == "eacm":
            self.selector = sel.build_selector(
                self.store, len(vocab), config.hidden_size, config.embed_dim,
                config.attn_dim_resolved, config.num_layers)
        self.generator = gen.build_generator(
            self.store, len(vocab), config.hidden_size, config.embed_dim,
            config.emotion_dim_resolved, config.attn_dim_resolved, config.num_layers,
            emotion_shaped)

    @property
    def mode(self) -> str:
        return self.config.mode

    def designated_emotion(self, category: str) -> Tensor:
        """One-hot response emotion for the seq2seq_emb path."""
        if category not in EMOTION_INDEX:
            raise ValueError(f"unknown emotion category {category!r}")
        vec = np.zeros(N_EMOTIONS)
        vec[EMOTION_INDEX[category]] = 1.0
        return ag.constant(vec, dtype=self.store.dtype)

    def response_emotion_for(self, pair: ConversationPair):
        """Mode-appropriate source of the response emotion vector.

        Returns (emotion tensor or None, selector output or None).
        """
        if self.mode == "seq2seq":
            return None, None
        if self.mode == "seq2seq_emb":
            return self.designated_emotion(pair.response_labels[0]), None
        out = sel.selector_forward(self.selector, pair.post)
        return out.response_emotion, out

    def pair_losses(self, pair: ConversationPair) -> PairLosses:
        emotion_pred, sel_out = self.response_emotion_for(pair)
        bias = None
        if emotion_pred is not None:
            bias = gen.emotion_vector(self.generator, emotion_pred)
        seq_loss = gen.seq2seq_loss(self.generator, pair.post, pair.response, bias)
        emo_loss = None
        if sel_out is not None:
            emo_loss = sel.selector_loss(
                sel_out.post_emotion, multi_hot(*pair.post_labels),
                sel_out.response_emotion, multi_hot(*pair.response_labels),
                positive_only=self.config.positive_only_emotion_loss)
        return PairLosses(emotion=emo_loss, seq2seq=seq_loss, response_emotion=emotion_pred)

    def respond(self, post_ids, designated: str | None = None,
                max_len: int | None = None) -> tuple[list[int], sel.SelectorOutput | None]:
        """Greedy-decode a response to a post. Stateless: no turn memory.

        In seq2seq_emb mode the designated category (default Other) picks
        the one-hot driving the generator.
        """
        max_len = self.config.max_decode_len if max_len is None else max_len
        sel_out = None
        bias = None
        if self.mode == "seq2seq_emb":
            emotion = self.designated_emotion(designated or "Other")
            bias = gen.emotion_vector(self.generator, emotion)
        elif self.mode == "eacm":
            sel_out = sel.selector_forward(self.selector, post_ids)
            bias = gen.emotion_vector(self.generator, sel_out.response_emotion)
        ids = gen.greedy_decode(self.generator, post_ids, bias, max_len=max_len)
        return ids, sel_out
