"""Checkpoint files: a text manifest followed by a raw float32 payload.

Layout, all UTF-8 lines until the payload marker:

    emochat-checkpoint 1
    config.<field> <value>          one line per config field
    vocab.size <n>
    vocab.token <id> <token>        n lines, ids contiguous from 0
    param <name> <dims,> <offset>   byte offset into the payload
    payload <nbytes>
    <nbytes of little-endian float32 data>

Parameters appear in registration order and tile the payload exactly, so
save -> load -> save reproduces the file byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import Config, parse_config
from .corpus import SPECIAL_TOKENS, Vocabulary
from .model import ChatModel

MAGIC = "emochat-checkpoint"
VERSION = 1
_F32 = np.dtype("<f4")


@dataclass
class Checkpoint:
    config: Config
    vocab: Vocabulary
    params: dict[str, np.ndarray]  # float32, in serialization order


def from_model(model: ChatModel) -> Checkpoint:
    params = {}
    for p in model.store.parameters():
        params[p.name] = np.ascontiguousarray(p.data, dtype=_F32)
    return Checkpoint(config=model.config, vocab=model.vocab, params=params)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    lines = [f"{MAGIC} {VERSION}"]
    for cfg_line in ckpt.config.to_text().splitlines():
        lines.append(f"config.{cfg_line}")
    tokens = ckpt.vocab.id_to_token
    lines.append(f"vocab.size {len(tokens)}")
    for i, token in enumerate(tokens):
        if len(token.split()) != 1 or token != token.strip():
            raise ValueError(f"checkpoint: token {token!r} contains whitespace and cannot be serialized")
        lines.append(f"vocab.token {i} {token}")
    offset = 0
    payload_parts = []
    for name, arr in ckpt.params.items():
        arr = np.ascontiguousarray(arr, dtype=_F32)
        dims = ",".join(str(d) for d in arr.shape)
        lines.append(f"param {name} {dims} {offset}")
        payload_parts.append(arr.tobytes())
        offset += arr.nbytes
    lines.append(f"payload {offset}")
    blob = ("\n".join(lines) + "\n").encode("utf-8") + b"".join(payload_parts)
    Path(path).write_bytes(blob)


def _parse_header(blob: bytes, path) -> tuple[list[str], bytes]:
    offset = 0
    lines = []
    while True:
        nl = blob.find(b"\n", offset)
        if nl < 0:
            raise ValueError(f"checkpoint {path}: truncated header, no payload marker")
        line = blob[offset:nl].decode("utf-8")
        offset = nl + 1
        lines.append(line)
        if line.startswith("payload "):
            return lines, blob[offset:]


def load_checkpoint(path) -> Checkpoint:
    blob = Path(path).read_bytes()
    lines, payload = _parse_header(blob, path)
    head = lines[0].split()
    if len(head) != 2 or head[0] != MAGIC:
        raise ValueError(f"checkpoint {path}: bad magic line {lines[0]!r}")
    if int(head[1]) != VERSION:
        raise ValueError(f"checkpoint {path}: unsupported version {head[1]}")

    config_lines = []
    vocab_size = None
    tokens: list[tuple[int, str]] = []
    param_specs: list[tuple[str, tuple[int, ...], int]] = []
    declared_payload = None
    for line in lines[1:]:
        key, _, rest = line.partition(" ")
        if key.startswith("config."):
            config_lines.append(f"{key[len('config.'):]} {rest}")
        elif key == "vocab.size":
            vocab_size = int(rest)
        elif key == "vocab.token":
            idx_str, _, token = rest.partition(" ")
            if not token:
                raise ValueError(f"checkpoint {path}: malformed vocab.token line {line!r}")
            tokens.append((int(idx_str), token))
        elif key == "param":
            try:
                name, dims_str, off_str = rest.rsplit(" ", 2)
                shape = tuple(int(d) for d in dims_str.split(","))
                param_specs.append((name, shape, int(off_str)))
            except ValueError as exc:
                raise ValueError(f"checkpoint {path}: malformed param line {line!r}") from exc
        elif key == "payload":
            declared_payload = int(rest)
        else:
            raise ValueError(f"checkpoint {path}: unknown manifest field {key!r}")

    config = parse_config("\n".join(config_lines))
    if vocab_size is None or vocab_size != len(tokens):
        raise ValueError(f"checkpoint {path}: vocab.size {vocab_size} does not match {len(tokens)} token lines")
    if [i for i, _ in tokens] != list(range(vocab_size)):
        raise ValueError(f"checkpoint {path}: vocab.token ids are not contiguous from 0")
    ordered = [t for _, t in tokens]
    if tuple(ordered[: len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
        raise ValueError(f"checkpoint {path}: reserved tokens are {ordered[:4]}, expected {list(SPECIAL_TOKENS)}")
    vocab = Vocabulary(ordered[len(SPECIAL_TOKENS):])

    if declared_payload is None:
        raise ValueError(f"checkpoint {path}: missing payload size")
    if len(payload) != declared_payload:
        raise ValueError(
            f"checkpoint {path}: payload holds {len(payload)} bytes, manifest declares {declared_payload}")
    params: dict[str, np.ndarray] = {}
    covered = 0
    for name, shape, offset in param_specs:
        if name in params:
            raise ValueError(f"checkpoint {path}: duplicate param {name!r}")
        nbytes = int(np.prod(shape)) * _F32.itemsize
        if offset < 0 or offset + nbytes > len(payload):
            raise ValueError(f"checkpoint {path}: param {name!r} slice [{offset}, {offset + nbytes}) "
                             f"falls outside the {len(payload)}-byte payload")
        params[name] = np.frombuffer(payload, dtype=_F32, count=int(np.prod(shape)),
                                     offset=offset).reshape(shape).copy()
        covered += nbytes
    if covered != len(payload):
        raise ValueError(f"checkpoint {path}: params cover {covered} of {len(payload)} payload bytes")
    return Checkpoint(config=config, vocab=vocab, params=params)


def restore_model(ckpt: Checkpoint, dtype=np.float32) -> ChatModel:
    """Rebuild a model and overwrite every parameter from the checkpoint.

    The checkpoint must carry exactly the parameter set the rebuilt model
    registers, shape for shape; any difference is reported in one error.
    """
    model = ChatModel(ckpt.config, ckpt.vocab, dtype=dtype)
    problems = []
    for p in model.store.parameters():
        if p.name not in ckpt.params:
            problems.append(f"missing {p.name}")
        elif ckpt.params[p.name].shape != p.data.shape:
            problems.append(
                f"shape mismatch {p.name}: checkpoint {ckpt.params[p.name].shape} vs model {p.data.shape}")
    for name in ckpt.params:
        if name not in model.store:
            problems.append(f"unexpected {name}")
    if problems:
        raise ValueError("checkpoint does not fit the model: " + "; ".join(problems))
    for p in model.store.parameters():
        p.data = ckpt.params[p.name].astype(dtype)
    return model
