"""Mini-batch SGD training with joint-loss weighting and warm starts.

The batch objective is the mean per-pair loss: in eacm mode
alpha * emotion_loss + (1 - alpha) * seq2seq_loss, in the two baseline
modes the sequence loss alone. A warm start from a plain seq2seq
checkpoint copies every shared-shape parameter, embeds the first decoder
layer's input weights into their widened slots with zeros over the new
emotion columns, and zero-initializes the attention bias projection, so
the warm-started model's first forward pass reproduces the pretrained
sequence loss exactly while the zero blocks still receive gradient and
move away from zero from the first update on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tape, Tensor, sgd_step
from .checkpoint import Checkpoint, from_model
from .config import Config
from .corpus import ConversationPair, Vocabulary
from .model import ChatModel


class DivergenceError(RuntimeError):
    pass


@dataclass
class EpochStats:
    epoch: int
    emotion_loss: float
    seq2seq_loss: float
    combined_loss: float


def combined_loss(emotion_loss: Tensor | None, seq_loss: Tensor, alpha: float) -> Tensor:
    """alpha-weighted joint objective; plain modes carry no emotion term."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if emotion_loss is None:
        return seq_loss
    return ag.add(ag.scale(emotion_loss, alpha), ag.scale(seq_loss, 1.0 - alpha))


def loss_log_csv(stats: list[EpochStats]) -> str:
    lines = ["epoch,emotion_loss,seq2seq_loss,combined_loss"]
    for s in stats:
        lines.append(f"{s.epoch},{s.emotion_loss:.6f},{s.seq2seq_loss:.6f},{s.combined_loss:.6f}")
    return "\n".join(lines) + "\n"


_WIDENED = ("gen.dec.l0.w_z", "gen.dec.l0.w_r", "gen.dec.l0.w_h")


def warm_start(model: ChatModel, ckpt: Checkpoint) -> None:
    """Initialize a model in place from a checkpointed one.

    Same-mode restarts copy everything. A plain seq2seq checkpoint may seed
    an emotion-shaped model as described in the module docstring. Any other
    mode pairing, any dimension disagreement, and any vocabulary
    disagreement are errors.
    """
    if ckpt.config.shape_signature() != model.config.shape_signature():
        raise ValueError(
            f"warm start: incompatible dimensions, checkpoint {ckpt.config.shape_signature()} "
            f"vs model {model.config.shape_signature()}")
    if ckpt.vocab.id_to_token != model.vocab.id_to_token:
        raise ValueError("warm start: checkpoint vocabulary differs from the corpus vocabulary")
    src_mode, dst_mode = ckpt.config.mode, model.config.mode
    if src_mode == dst_mode:
        for p in model.store.parameters():
            if p.name not in ckpt.params or ckpt.params[p.name].shape != p.data.shape:
                raise ValueError(f"warm start: checkpoint is missing parameter {p.name}")
            p.data = ckpt.params[p.name].astype(model.store.dtype)
        return
    if src_mode != "seq2seq":
        raise ValueError(f"warm start: cannot initialize mode {dst_mode!r} from mode {src_mode!r}")

    embed_dim = model.config.embed_dim
    for name, arr in ckpt.params.items():
        if name not in model.store:
            raise ValueError(f"warm start: checkpoint parameter {name!r} has no slot in the model")
        target = model.store[name]
        if name in _WIDENED:
            widened = np.zeros(target.data.shape, dtype=model.store.dtype)
            widened[:, :embed_dim] = arr
            target.data = widened
        elif arr.shape == target.data.shape:
            target.data = arr.astype(model.store.dtype)
        else:
            raise ValueError(f"warm start: parameter {name!r} has shape {arr.shape}, model expects "
                             f"{target.data.shape}")
    # the attention bias projection starts silent so the first forward pass
    # still equals the pretrained model; it picks up gradient immediately
    model.store["gen.attn.w3"].data = np.zeros(model.store["gen.attn.w3"].data.shape,
                                               dtype=model.store.dtype)


def train(pairs: list[ConversationPair], vocab: Vocabulary, config: Config,
          init: Checkpoint | None = None) -> tuple[ChatModel, list[EpochStats]]:
    """Train a fresh (or warm-started) model; returns it with per-epoch stats.

    Deterministic for a given config, corpus, and warm start: parameter
    init and batch shuffling both derive from config.seed. A non-finite
    batch loss aborts with the epoch and batch index. config.stop_loss, if
    set, stops after the first epoch whose mean per-token sequence loss
    falls below it.
    """
    config.validate()
    if not pairs:
        raise ValueError("train: empty corpus")
    model = ChatModel(config, vocab)
    if init is not None:
        warm_start(model, init)
    shuffle_rng = np.random.default_rng([config.seed, 1])
    stats: list[EpochStats] = []
    params = model.store.parameters()
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(len(pairs))
        emo_sum = 0.0
        seq_sum = 0.0
        comb_sum = 0.0
        for batch_index, start in enumerate(range(0, len(pairs), config.batch_size)):
            batch = [pairs[i] for i in order[start:start + config.batch_size]]
            model.store.zero_grad()
            with Tape() as tape:
                emo_terms = []
                seq_terms = []
                for pair in batch:
                    losses = model.pair_losses(pair)
                    seq_terms.append(losses.seq2seq)
                    if losses.emotion is not None:
                        emo_terms.append(losses.emotion)
                emo_mean = ag.mean_tensors(emo_terms) if emo_terms else None
                seq_mean = ag.mean_tensors(seq_terms)
                batch_loss = combined_loss(emo_mean, seq_mean, config.alpha)
                if not np.isfinite(batch_loss.item()):
                    raise DivergenceError(
                        f"non-finite loss {batch_loss.item()} at epoch {epoch}, batch {batch_index}")
                tape.backward(batch_loss)
            sgd_step(params, config.learning_rate, config.clip_norm)
            n = len(batch)
            emo_sum += (emo_mean.item() if emo_mean is not None else 0.0) * n
            seq_sum += seq_mean.item() * n
            comb_sum += batch_loss.item() * n
        stats.append(EpochStats(
            epoch=epoch,
            emotion_loss=emo_sum / len(pairs),
            seq2seq_loss=seq_sum / len(pairs),
            combined_loss=comb_sum / len(pairs),
        ))
        if config.stop_loss is not None and stats[-1].seq2seq_loss < config.stop_loss:
            break
    return model, stats


def pretrain(pairs: list[ConversationPair], vocab: Vocabulary,
             config: Config) -> tuple[ChatModel, list[EpochStats]]:
    """Plain seq2seq training pass whose checkpoint seeds emotion-shaped runs."""
    if config.mode != "seq2seq":
        raise ValueError(f"pretrain runs in seq2seq mode, got {config.mode!r}")
    return train(pairs, vocab, config)


def to_checkpoint(model: ChatModel) -> Checkpoint:
    return from_model(model)
