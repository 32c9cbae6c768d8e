"""Recurrent stacks and attention pooling composed from autograd primitives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import GRUCellParams, Parameter, ParameterStore, Tensor


@dataclass
class GRUStackParams:
    layers: list[GRUCellParams]

    @property
    def hidden_size(self) -> int:
        return self.layers[0].u_z.shape[0]

    def all(self) -> list[Parameter]:
        return [p for cell in self.layers for p in cell.all()]


def build_gru_cell(store: ParameterStore, prefix: str, input_dim: int, hidden: int) -> GRUCellParams:
    return GRUCellParams(
        w_z=store.create(f"{prefix}.w_z", (hidden, input_dim)),
        u_z=store.create(f"{prefix}.u_z", (hidden, hidden)),
        b_z=store.create(f"{prefix}.b_z", (hidden,)),
        w_r=store.create(f"{prefix}.w_r", (hidden, input_dim)),
        u_r=store.create(f"{prefix}.u_r", (hidden, hidden)),
        b_r=store.create(f"{prefix}.b_r", (hidden,)),
        w_h=store.create(f"{prefix}.w_h", (hidden, input_dim)),
        u_h=store.create(f"{prefix}.u_h", (hidden, hidden)),
        b_h=store.create(f"{prefix}.b_h", (hidden,)),
    )


def build_gru_stack(store: ParameterStore, prefix: str, input_dim: int, hidden: int,
                    num_layers: int) -> GRUStackParams:
    cells = []
    for i in range(num_layers):
        cells.append(build_gru_cell(store, f"{prefix}.l{i}", input_dim if i == 0 else hidden, hidden))
    return GRUStackParams(cells)


def run_gru_stack(inputs: list[Tensor], stack: GRUStackParams,
                  initial: list[Tensor] | None = None) -> tuple[list[Tensor], list[Tensor]]:
    """Run a stacked GRU over a sequence of input vectors.

    Returns (top-layer state at every step, final state of every layer).
    """
    if not inputs:
        raise ValueError("run_gru_stack: empty input sequence")
    hidden = stack.hidden_size
    dtype = stack.layers[0].b_z.data.dtype
    if initial is None:
        states = [ag.constant(np.zeros(hidden), dtype=dtype) for _ in stack.layers]
    else:
        if len(initial) != len(stack.layers):
            raise ValueError(f"run_gru_stack: {len(initial)} initial states for {len(stack.layers)} layers")
        states = list(initial)
    top = []
    for x in inputs:
        layer_in = x
        for i, cell in enumerate(stack.layers):
            states[i] = ag.gru_cell(layer_in, states[i], cell)
            layer_in = states[i]
        top.append(layer_in)
    return top, states


def embed_tokens(table: Parameter, token_ids) -> list[Tensor]:
    return [ag.embed_row(table, int(t)) for t in token_ids]


@dataclass
class AttentionPoolParams:
    """Self-attention pooling head: score_i = v . tanh(W h_i)."""

    w: Parameter  # (attn, hidden)
    v: Parameter  # (attn,)


def build_attention_pool(store: ParameterStore, prefix: str, hidden: int, attn: int) -> AttentionPoolParams:
    return AttentionPoolParams(
        w=store.create(f"{prefix}.w", (attn, hidden)),
        v=store.create(f"{prefix}.v", (attn,)),
    )


def attention_pool(states: Tensor, p: AttentionPoolParams,
                   mask: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
    """Pool a (T, hidden) state matrix into one (hidden,) vector.

    Weights are a softmax over per-position scores; masked positions get
    weight exactly zero. Returns (pooled vector, weights).
    """
    if states.data.ndim != 2:
        raise ValueError(f"attention_pool: expected (T, hidden) states, got shape {states.shape}")
    scores = ag.matmul(ag.tanh(ag.matmul(states, ag.transpose(p.w))), p.v)
    if mask is None:
        mask = np.ones(states.shape[0], dtype=bool)
    weights = ag.masked_softmax(scores, mask)
    pooled = ag.matmul(weights, states)
    return pooled, weights
