"""Run configuration: one flat dataclass serialized as `key value` lines."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

MODES = ("seq2seq", "seq2seq_emb", "eacm")


@dataclass
class Config:
    """Model dimensions plus training hyperparameters.

    Desk-scale defaults keep every acceptance run under its time budget;
    the full-scale setting (hidden 256, embeddings 200, vocabulary 40000,
    batch 128, learning rate 0.5) is reachable by overriding these fields.
    """

    mode: str = "eacm"
    hidden_size: int = 64
    embed_dim: int = 32
    emotion_dim: int | None = None  # defaults to embed_dim
    attn_dim: int | None = None  # defaults to hidden_size
    num_layers: int = 2
    vocab_cap: int = 200
    max_len: int = 50
    max_decode_len: int = 50
    alpha: float = 0.5
    learning_rate: float = 0.1
    batch_size: int = 16
    epochs: int = 30
    clip_norm: float = 5.0
    seed: int = 0
    positive_only_emotion_loss: bool = False
    stop_loss: float | None = None

    @property
    def emotion_dim_resolved(self) -> int:
        return self.embed_dim if self.emotion_dim is None else self.emotion_dim

    @property
    def attn_dim_resolved(self) -> int:
        return self.hidden_size if self.attn_dim is None else self.attn_dim

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {list(MODES)}")
        for name in ("hidden_size", "embed_dim", "num_layers", "vocab_cap", "max_len",
                     "max_decode_len", "batch_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"config {name} must be positive, got {getattr(self, name)}")
        if self.epochs < 0:
            raise ValueError(f"config epochs must be >= 0, got {self.epochs}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"config alpha must lie in [0, 1], got {self.alpha}")
        if self.learning_rate <= 0:
            raise ValueError(f"config learning_rate must be positive, got {self.learning_rate}")
        if self.clip_norm <= 0:
            raise ValueError(f"config clip_norm must be positive, got {self.clip_norm}")

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if value is None:
                rendered = "none"
            elif isinstance(value, bool):
                rendered = "true" if value else "false"
            else:
                rendered = repr(value) if isinstance(value, float) else str(value)
            lines.append(f"{f.name} {rendered}")
        return "\n".join(lines) + "\n"

    # shape-determining fields that must agree when restoring parameters
    def shape_signature(self) -> tuple:
        return (self.hidden_size, self.embed_dim, self.emotion_dim_resolved,
                self.attn_dim_resolved, self.num_layers)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(Config)}


def _coerce(name: str, raw: str):
    ftype = _FIELD_TYPES[name]
    if raw == "none":
        if "None" not in ftype:
            raise ValueError(f"config key {name!r} does not accept none")
        return None
    if ftype.startswith("bool"):
        if raw not in ("true", "false"):
            raise ValueError(f"config key {name!r} expects true or false, got {raw!r}")
        return raw == "true"
    if ftype.startswith("int"):
        return int(raw)
    if ftype.startswith("float"):
        return float(raw)
    return raw


def parse_config(text: str, base: Config | None = None) -> Config:
    """Parse `key value` lines (# comments allowed) on top of base values."""
    cfg = dataclasses.replace(base) if base is not None else Config()
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(None, 1)
        if len(parts) != 2:
            raise ValueError(f"config line {lineno}: expected 'key value', got {line!r}")
        key, raw = parts
        if key not in _FIELD_TYPES:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        try:
            setattr(cfg, key, _coerce(key, raw))
        except ValueError as exc:
            raise ValueError(f"config line {lineno}: {exc}") from exc
    return cfg


def load_config(path, base: Config | None = None) -> Config:
    return parse_config(Path(path).read_text(encoding="utf-8"), base)
