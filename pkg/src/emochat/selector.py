"""Emotion selector: decide which emotions a response should carry.

Two encoder tracks read the post in parallel, one over sentiment-oriented
embeddings and one over semantic embeddings. Each track is a stacked GRU
whose per-step top states are pooled by self-attention into a single
vector. The sentiment track's pooled state also feeds a sigmoid head that
recovers the post's own emotions (an auxiliary supervision signal). A
learned gate fuses the two pooled states, and a final sigmoid head emits
the response emotion vector: six independent strengths, deliberately not
normalized to a distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Parameter, ParameterStore, Tensor
from .corpus import EMOTIONS, PAD_ID
from .layers import (AttentionPoolParams, GRUStackParams, attention_pool,
                     build_attention_pool, build_gru_stack, embed_tokens, run_gru_stack)

N_EMOTIONS = len(EMOTIONS)
PROB_EPS = 1e-7  # probabilities are clamped to [eps, 1-eps] before any log


@dataclass
class SelectorParams:
    emb_sentiment: Parameter  # (vocab, embed_dim), sentiment-flavored track
    emb_semantic: Parameter  # (vocab, embed_dim)
    enc_sentiment: GRUStackParams
    enc_semantic: GRUStackParams
    pool_sentiment: AttentionPoolParams
    pool_semantic: AttentionPoolParams
    post_w: Parameter  # (6, hidden)
    post_b: Parameter  # (6,)
    fuse_w: Parameter  # (hidden, 2*hidden)
    fuse_b: Parameter  # (hidden,)
    predict_w: Parameter  # (6, hidden)
    predict_b: Parameter  # (6,)


def build_selector(store: ParameterStore, vocab_size: int, hidden: int, embed_dim: int,
                   attn_dim: int, num_layers: int) -> SelectorParams:
    return SelectorParams(
        emb_sentiment=store.create("sel.emb_sentiment", (vocab_size, embed_dim)),
        emb_semantic=store.create("sel.emb_semantic", (vocab_size, embed_dim)),
        enc_sentiment=build_gru_stack(store, "sel.enc_sentiment", embed_dim, hidden, num_layers),
        enc_semantic=build_gru_stack(store, "sel.enc_semantic", embed_dim, hidden, num_layers),
        pool_sentiment=build_attention_pool(store, "sel.pool_sentiment", hidden, attn_dim),
        pool_semantic=build_attention_pool(store, "sel.pool_semantic", hidden, attn_dim),
        post_w=store.create("sel.post.w", (N_EMOTIONS, hidden)),
        post_b=store.create("sel.post.b", (N_EMOTIONS,)),
        fuse_w=store.create("sel.fuse.w", (hidden, 2 * hidden)),
        fuse_b=store.create("sel.fuse.b", (hidden,)),
        predict_w=store.create("sel.predict.w", (N_EMOTIONS, hidden)),
        predict_b=store.create("sel.predict.b", (N_EMOTIONS,)),
    )


def encode_with_pooling(token_ids, table: Parameter, stack: GRUStackParams,
                        pool: AttentionPoolParams, pad_id: int = PAD_ID) -> tuple[Tensor, Tensor]:
    """Embed, run the GRU stack, and pool top states by self-attention.

    Positions holding the pad id get attention weight exactly zero.
    Returns (pooled state, attention weights).
    """
    ids = [int(t) for t in token_ids]
    if not ids:
        raise ValueError("encode_with_pooling: empty token sequence")
    mask = np.array([t != pad_id for t in ids], dtype=bool)
    if not mask.any():
        raise ValueError("encode_with_pooling: sequence contains only padding")
    inputs = embed_tokens(table, ids)
    top, _ = run_gru_stack(inputs, stack)
    return attention_pool(ag.rows_stack(top), pool, mask)


def post_emotion_head(p: SelectorParams, pooled_sentiment: Tensor) -> Tensor:
    """Sigmoid head recovering the post's own emotion vector."""
    return ag.sigmoid(ag.add(ag.matmul(p.post_w, pooled_sentiment), p.post_b))


def fuse(p: SelectorParams, pooled_sentiment: Tensor, pooled_semantic: Tensor) -> tuple[Tensor, Tensor]:
    """Gate the two squashed pooled states into one fused vector.

    gate = sigmoid(W [semantic; sentiment] + b)
    fused = gate * tanh(semantic) + (1 - gate) * tanh(sentiment)

    With equal inputs the fusion is a fixed point: fused == tanh(input)
    whatever the gate says. Returns (fused, gate).
    """
    gate = ag.sigmoid(ag.add(ag.matmul(p.fuse_w, ag.concat(pooled_semantic, pooled_sentiment)), p.fuse_b))
    inverse = ag.add_scalar(ag.scale(gate, -1.0), 1.0)
    fused = ag.add(ag.mul(gate, ag.tanh(pooled_semantic)), ag.mul(inverse, ag.tanh(pooled_sentiment)))
    return fused, gate


def predict_response_emotion(p: SelectorParams, fused: Tensor) -> Tensor:
    return ag.sigmoid(ag.add(ag.matmul(p.predict_w, fused), p.predict_b))


@dataclass
class SelectorOutput:
    post_emotion: Tensor  # (6,) sigmoid strengths for the post
    response_emotion: Tensor  # (6,) sigmoid strengths for the response
    fused: Tensor
    gate: Tensor
    attn_sentiment: Tensor
    attn_semantic: Tensor


def selector_forward(p: SelectorParams, post_ids, pad_id: int = PAD_ID) -> SelectorOutput:
    pooled_sent, attn_sent = encode_with_pooling(post_ids, p.emb_sentiment, p.enc_sentiment,
                                                 p.pool_sentiment, pad_id)
    pooled_sem, attn_sem = encode_with_pooling(post_ids, p.emb_semantic, p.enc_semantic,
                                               p.pool_semantic, pad_id)
    fused, gate = fuse(p, pooled_sent, pooled_sem)
    return SelectorOutput(
        post_emotion=post_emotion_head(p, pooled_sent),
        response_emotion=predict_response_emotion(p, fused),
        fused=fused,
        gate=gate,
        attn_sentiment=attn_sent,
        attn_semantic=attn_sem,
    )


def _bce(predicted: Tensor, target: np.ndarray, positive_only: bool) -> Tensor:
    """Binary cross-entropy summed over the six categories.

    positive_only drops the (1 - target) * log(1 - predicted) half, keeping
    only the pull toward labeled categories; absent categories then receive
    no direct push toward zero.
    """
    if predicted.shape != (N_EMOTIONS,) or np.asarray(target).shape != (N_EMOTIONS,):
        raise ValueError(
            f"emotion loss expects length-{N_EMOTIONS} vectors, got {predicted.shape} and {np.asarray(target).shape}")
    safe = ag.clamp(predicted, PROB_EPS, 1.0 - PROB_EPS)
    t = ag.constant(target, dtype=predicted.data.dtype)
    pos = ag.vsum(ag.mul(t, ag.log(safe)))
    if positive_only:
        return ag.scale(pos, -1.0)
    t_inv = ag.add_scalar(ag.scale(t, -1.0), 1.0)
    safe_inv = ag.add_scalar(ag.scale(safe, -1.0), 1.0)
    neg = ag.vsum(ag.mul(t_inv, ag.log(safe_inv)))
    return ag.scale(ag.add(pos, neg), -1.0)


def selector_loss(post_pred: Tensor, post_target: np.ndarray, response_pred: Tensor,
                  response_target: np.ndarray, positive_only: bool = False) -> Tensor:
    """Post-recovery loss plus response-prediction loss."""
    return ag.add(_bce(post_pred, post_target, positive_only),
                  _bce(response_pred, response_target, positive_only))


def load_pretrained_embeddings(path, vocab, table: Parameter) -> int:
    """Overwrite embedding rows from a text file of `token v1 .. vd` lines.

    Tokens absent from the vocabulary are skipped; vocabulary entries absent
    from the file keep their random initialization. Returns the number of
    rows replaced.
    """
    dim = table.shape[1]
    replaced = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if len(values) != dim:
                raise ValueError(
                    f"embedding file line {lineno}: expected {dim} values for {token!r}, got {len(values)}")
            token_id = vocab.token_to_id.get(token)
            if token_id is None:
                continue
            table.data[token_id] = np.asarray([float(v) for v in values], dtype=table.data.dtype)
            replaced += 1
    return replaced
