"""Sequence generator: attention seq2seq with a soft emotion bias.

The response emotion vector (six strengths) is projected through a learned
emotion table into a dense bias vector. That vector enters the decoder in
two places: concatenated to every decoder input token embedding, and as a
third additive term inside the attention scorer. In plain seq2seq shape
both entry points are absent and the module is an ordinary attention
decoder; the emotion-shaped model with a zero bias vector computes exactly
the same losses, which is checked by the reduction tests.

Decoder recurrence: the post-attention combined state is the recurrent
state of the first decoder layer at the next step (the layer that consumes
the token embedding); upper layers keep their own recurrence and start
from the encoder's final top state. The initial combined state is the
combine projection applied to the encoder's final top state with a zero
context.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Parameter, ParameterStore, Tensor
from .corpus import EOS_ID, SOS_ID
from .layers import GRUStackParams, build_gru_stack, embed_tokens, run_gru_stack
from .selector import N_EMOTIONS


@dataclass
class GeneratorParams:
    emb_encoder: Parameter  # (vocab, embed_dim)
    emb_decoder: Parameter  # (vocab, embed_dim)
    encoder: GRUStackParams
    decoder: GRUStackParams  # first layer input: embed_dim (+ emotion_dim when emotion-shaped)
    attn_w1: Parameter  # (attn, hidden) over encoder states
    attn_w2: Parameter  # (attn, hidden) over the decoder state
    attn_w3: Parameter | None  # (attn, emotion_dim) over the emotion bias; None in plain shape
    attn_v: Parameter  # (attn,)
    combine_w: Parameter  # (hidden, 2*hidden)
    emotion_table: Parameter | None  # (emotion_dim, 6); None in plain shape
    out_w: Parameter  # (vocab, hidden)
    out_b: Parameter  # (vocab,)

    @property
    def emotion_shaped(self) -> bool:
        return self.emotion_table is not None


def build_generator(store: ParameterStore, vocab_size: int, hidden: int, embed_dim: int,
                    emotion_dim: int, attn_dim: int, num_layers: int,
                    emotion_shaped: bool) -> GeneratorParams:
    dec_input = embed_dim + emotion_dim if emotion_shaped else embed_dim
    return GeneratorParams(
        emb_encoder=store.create("gen.emb_encoder", (vocab_size, embed_dim)),
        emb_decoder=store.create("gen.emb_decoder", (vocab_size, embed_dim)),
        encoder=build_gru_stack(store, "gen.enc", embed_dim, hidden, num_layers),
        decoder=build_gru_stack(store, "gen.dec", dec_input, hidden, num_layers),
        attn_w1=store.create("gen.attn.w1", (attn_dim, hidden)),
        attn_w2=store.create("gen.attn.w2", (attn_dim, hidden)),
        attn_w3=store.create("gen.attn.w3", (attn_dim, emotion_dim)) if emotion_shaped else None,
        attn_v=store.create("gen.attn.v", (attn_dim,)),
        combine_w=store.create("gen.combine.w", (hidden, 2 * hidden)),
        emotion_table=store.create("gen.emotion_table", (emotion_dim, N_EMOTIONS)) if emotion_shaped else None,
        out_w=store.create("gen.out.w", (vocab_size, hidden)),
        out_b=store.create("gen.out.b", (vocab_size,)),
    )


def emotion_vector(p: GeneratorParams, response_emotion: Tensor) -> Tensor:
    """Project six emotion strengths into the dense bias vector.

    Linear by construction: a one-hot picks a single table column, and
    scaling the input scales the output.
    """
    if p.emotion_table is None:
        raise ValueError("emotion_vector: this generator was built without an emotion table")
    return ag.matmul(p.emotion_table, response_emotion)


@dataclass
class EncodedPost:
    states: Tensor  # (T, hidden) top-layer encoder states
    states_w1: Tensor  # (T, attn) precomputed attn_w1 @ states rows
    finals: list[Tensor]  # final state of every encoder layer
    mask: np.ndarray


def encode_post(p: GeneratorParams, post_ids) -> EncodedPost:
    ids = [int(t) for t in post_ids]
    if not ids:
        raise ValueError("encode_post: empty post")
    inputs = embed_tokens(p.emb_encoder, ids)
    top, finals = run_gru_stack(inputs, p.encoder)
    states = ag.rows_stack(top)
    return EncodedPost(
        states=states,
        states_w1=ag.matmul(states, ag.transpose(p.attn_w1)),
        finals=finals,
        mask=np.ones(len(ids), dtype=bool),
    )


def biased_attention(p: GeneratorParams, encoder_states: Tensor, state: Tensor,
                     emotion_bias: Tensor | None, mask: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
    """Attend over encoder states from the current decoder state.

    score_i = v . tanh(W1 h_i + W2 s + W3 bias); the bias term is skipped
    when the generator is plain-shaped or no bias vector is given. Masked
    positions receive weight exactly zero. Returns (context, weights).
    """
    states_w1 = ag.matmul(encoder_states, ag.transpose(p.attn_w1))
    return _attend(p, states_w1, encoder_states,
                   mask if mask is not None else np.ones(encoder_states.shape[0], dtype=bool),
                   state, _emotion_term(p, emotion_bias))


def _emotion_term(p: GeneratorParams, emotion_bias: Tensor | None) -> Tensor | None:
    if emotion_bias is None:
        return None
    if p.attn_w3 is None:
        raise ValueError("biased_attention: emotion bias given but this generator has no attn_w3")
    return ag.matmul(p.attn_w3, emotion_bias)


def _attend(p: GeneratorParams, states_w1: Tensor, states: Tensor, mask: np.ndarray,
            state: Tensor, emotion_term: Tensor | None) -> tuple[Tensor, Tensor]:
    shift = ag.matmul(p.attn_w2, state)
    if emotion_term is not None:
        shift = ag.add(shift, emotion_term)
    scores = ag.matmul(ag.tanh(ag.add_rowvec(states_w1, shift)), p.attn_v)
    weights = ag.masked_softmax(scores, mask)
    context = ag.matmul(weights, states)
    return context, weights


@dataclass
class DecoderState:
    layer_states: list[Tensor]  # slot 0 holds the combined state fed to layer 0
    combined: Tensor
    step: int


def init_decoder_state(p: GeneratorParams, encoded: EncodedPost) -> DecoderState:
    hidden = p.encoder.hidden_size
    dtype = p.combine_w.data.dtype
    zero_context = ag.constant(np.zeros(hidden), dtype=dtype)
    combined = ag.matmul(p.combine_w, ag.concat(encoded.finals[-1], zero_context))
    layer_states = [combined] + encoded.finals[1:]
    return DecoderState(layer_states=layer_states, combined=combined, step=0)


def decoder_step(p: GeneratorParams, state: DecoderState, prev_token: int,
                 emotion_bias: Tensor | None, encoded: EncodedPost,
                 emotion_term: Tensor | None = None) -> tuple[DecoderState, Tensor, Tensor]:
    """Advance one step; returns (new state, vocabulary logits, attention weights).

    emotion_term may carry the precomputed attn_w3 @ bias product; it is
    derived from emotion_bias otherwise.
    """
    emb = ag.embed_row(p.emb_decoder, int(prev_token))
    if p.emotion_shaped:
        if emotion_bias is None:
            raise ValueError("decoder_step: emotion-shaped generator needs an emotion bias vector")
        x = ag.concat(emb, emotion_bias)
    else:
        if emotion_bias is not None:
            raise ValueError("decoder_step: plain generator cannot take an emotion bias vector")
        x = emb
    layer_in = x
    new_states = []
    for i, cell in enumerate(p.decoder.layers):
        new_states.append(ag.gru_cell(layer_in, state.layer_states[i], cell))
        layer_in = new_states[i]
    top = new_states[-1]
    if emotion_term is None:
        emotion_term = _emotion_term(p, emotion_bias)
    context, weights = _attend(p, encoded.states_w1, encoded.states, encoded.mask, top, emotion_term)
    combined = ag.matmul(p.combine_w, ag.concat(top, context))
    logits = ag.add(ag.matmul(p.out_w, combined), p.out_b)
    next_state = DecoderState(layer_states=[combined] + new_states[1:], combined=combined,
                              step=state.step + 1)
    return next_state, logits, weights


def seq2seq_loss(p: GeneratorParams, post_ids, response_ids, emotion_bias: Tensor | None,
                 sos_id: int = SOS_ID, eos_id: int = EOS_ID) -> Tensor:
    """Teacher-forced cross-entropy, averaged per target token.

    The target sequence is the response plus a closing EOS; inputs are the
    same sequence shifted right behind SOS.
    """
    response_ids = [int(t) for t in response_ids]
    if not response_ids:
        raise ValueError("seq2seq_loss: empty response")
    targets = response_ids + [eos_id]
    inputs = [sos_id] + response_ids
    encoded = encode_post(p, post_ids)
    state = init_decoder_state(p, encoded)
    emotion_term = _emotion_term(p, emotion_bias)
    terms = []
    for prev_token, target in zip(inputs, targets):
        state, logits, _ = decoder_step(p, state, prev_token, emotion_bias, encoded, emotion_term)
        terms.append(ag.scale(ag.pick(ag.log_softmax(logits), target), -1.0))
    return ag.mean_tensors(terms)


def greedy_decode(p: GeneratorParams, post_ids, emotion_bias: Tensor | None,
                  max_len: int = 50, sos_id: int = SOS_ID, eos_id: int = EOS_ID) -> list[int]:
    """Argmax decoding from SOS until EOS or max_len tokens.

    Ties break toward the lowest token id. The returned ids exclude EOS.
    """
    if max_len <= 0:
        raise ValueError(f"greedy_decode: max_len must be positive, got {max_len}")
    encoded = encode_post(p, post_ids)
    state = init_decoder_state(p, encoded)
    emotion_term = _emotion_term(p, emotion_bias)
    out: list[int] = []
    prev = sos_id
    for _ in range(max_len):
        state, logits, _ = decoder_step(p, state, prev, emotion_bias, encoded, emotion_term)
        prev = int(np.argmax(logits.data))
        if prev == eos_id:
            break
        out.append(prev)
    return out
