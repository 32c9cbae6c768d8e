"""Command line entry points.

Exit codes: 0 success, 1 usage error, 2 runtime failure, 3 gradient check
failure. Flags override config-file values; commands that produce an
output directory echo their effective config into it.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import evaluation
from .checkpoint import load_checkpoint, restore_model, save_checkpoint
from .config import Config, load_config
from .corpus import (SyntheticSpec, eip_csv, eip_matrix, generate_synthetic, load_corpus,
                     load_synthetic_spec, pairs_from_records, synthetic_spec_text,
                     write_corpus)
from .model import ChatModel
from .training import combined_loss, to_checkpoint, train
from . import autograd as ag

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_GRADCHECK = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


_CONFIG_FLAGS = ("mode", "seed", "epochs", "alpha", "learning_rate", "batch_size",
                 "hidden_size", "embed_dim", "emotion_dim", "attn_dim", "vocab_cap",
                 "max_len", "max_decode_len", "clip_norm", "stop_loss")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key-value config file")
    p.add_argument("--mode", choices=("seq2seq", "seq2seq_emb", "eacm"))
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--hidden-size", dest="hidden_size", type=int)
    p.add_argument("--embed-dim", dest="embed_dim", type=int)
    p.add_argument("--emotion-dim", dest="emotion_dim", type=int)
    p.add_argument("--attn-dim", dest="attn_dim", type=int)
    p.add_argument("--vocab-cap", dest="vocab_cap", type=int)
    p.add_argument("--max-len", dest="max_len", type=int)
    p.add_argument("--max-decode-len", dest="max_decode_len", type=int)
    p.add_argument("--clip-norm", dest="clip_norm", type=float)
    p.add_argument("--stop-loss", dest="stop_loss", type=float)
    p.add_argument("--positive-only-emotion-loss", dest="positive_only_emotion_loss",
                   action="store_true", default=None)


def resolve_config(args) -> Config:
    cfg = Config()
    if getattr(args, "config", None):
        cfg = load_config(args.config, cfg)
    for name in _CONFIG_FLAGS + ("positive_only_emotion_loss",):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    cfg.validate()
    return cfg


def _echo_config(cfg: Config, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.txt").write_text(cfg.to_text(), encoding="utf-8")


def cmd_synth(args) -> int:
    spec = load_synthetic_spec(args.spec) if args.spec else SyntheticSpec()
    if args.pairs is not None:
        spec.pairs = args.pairs
    if args.seed is not None:
        spec.seed = args.seed
    if args.templates is not None:
        from .corpus import TEMPLATE_SETS

        spec.families = TEMPLATE_SETS[args.templates]
    records = generate_synthetic(spec)
    write_corpus(records, args.out)
    # effective-spec echo: feed this back to synth --spec or eval --oracle
    Path(str(args.out) + ".spec").write_text(synthetic_spec_text(spec), encoding="utf-8")
    print(f"wrote {len(records)} pairs to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    pairs, vocab = load_corpus(args.corpus, vocab_cap=cfg.vocab_cap, max_len=cfg.max_len)
    init = load_checkpoint(args.init) if args.init else None
    model, stats = train(pairs, vocab, cfg, init=init)
    out_dir = Path(args.out)
    _echo_config(cfg, out_dir)
    save_checkpoint(to_checkpoint(model), out_dir / "model.ckpt")
    from .training import loss_log_csv

    (out_dir / "loss_log.csv").write_text(loss_log_csv(stats), encoding="utf-8")
    if stats:
        last = stats[-1]
        print(f"epoch {last.epoch}: emotion {last.emotion_loss:.4f} "
              f"seq2seq {last.seq2seq_loss:.4f} combined {last.combined_loss:.4f}")
    print(f"checkpoint written to {out_dir / 'model.ckpt'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    model = restore_model(ckpt)
    pairs, _ = load_corpus(args.corpus, vocab=ckpt.vocab, max_len=ckpt.config.max_len)
    oracle = None
    if args.oracle:
        oracle = evaluation.EmotionOracle.from_spec(load_synthetic_spec(args.oracle))
    report = evaluation.evaluate(model, pairs, oracle=oracle)
    out_dir = Path(args.out)
    evaluation.write_report(report, out_dir)
    _echo_config(ckpt.config, out_dir)
    sys.stdout.write(report.to_text())
    return EXIT_OK


def cmd_eip(args) -> int:
    pairs, _ = load_corpus(args.corpus)
    text = eip_csv(eip_matrix(pairs))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote interaction matrix to {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


GRADCHECK_CONFIG = Config(mode="eacm", hidden_size=8, embed_dim=8, attn_dim=8,
                          vocab_cap=20, max_len=5, batch_size=4, seed=3)


def cmd_gradcheck(args) -> int:
    cfg = GRADCHECK_CONFIG
    if args.config:
        cfg = load_config(args.config, cfg)
    records = generate_synthetic(SyntheticSpec(pairs=3, seed=11))
    pairs, vocab = pairs_from_records(records, vocab_cap=cfg.vocab_cap, max_len=cfg.max_len)
    model = ChatModel(cfg, vocab, dtype=np.float64)

    def loss_fn():
        emo, seq = [], []
        for pair in pairs:
            losses = model.pair_losses(pair)
            seq.append(losses.seq2seq)
            if losses.emotion is not None:
                emo.append(losses.emotion)
        return combined_loss(ag.mean_tensors(emo) if emo else None, ag.mean_tensors(seq), cfg.alpha)

    mutate = None
    if args.corrupt:
        def mutate(grads):
            # fault injection: double one gradient entry; the check must name it
            grads["gen.out.b"][0] *= 2.0

    result = ag.finite_diff_check(loss_fn, model.store.parameters(), epsilon=args.epsilon,
                                  mutate_grads=mutate)
    where = f"{result.param_name}{list(result.index)}"
    print(f"gradcheck: {result.entries} entries, max rel error {result.max_rel_error:.3e} at {where}")
    if result.passed(args.threshold):
        print("gradcheck: PASS")
        return EXIT_OK
    print(f"gradcheck: FAIL (threshold {args.threshold:.1e})")
    return EXIT_GRADCHECK


def cmd_chat(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    model = restore_model(ckpt)
    vocab = model.vocab

    def fmt(vec) -> str:
        from .corpus import EMOTIONS

        return " ".join(f"{name}:{float(v):.3f}" for name, v in zip(EMOTIONS, vec))

    for line in sys.stdin:
        tokens = line.split()
        if not tokens:
            continue
        ids = vocab.encode(tokens)
        reply_ids, sel_out = model.respond(ids, designated=args.emotion, max_len=args.max_len)
        if sel_out is not None:
            print(f"post_emotion {fmt(sel_out.post_emotion.data)}")
            print(f"response_emotion {fmt(sel_out.response_emotion.data)}")
        elif model.mode == "seq2seq_emb":
            print(f"designated_emotion {args.emotion}")
        print(f"reply: {' '.join(vocab.decode(reply_ids))}")
        sys.stdout.flush()
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="emochat", description="emotion-aware chat model toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--spec", help="synthetic spec file (flat key-value)")
    p.add_argument("--pairs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--templates", choices=("default", "short"),
                   help="named template set (default: default)")
    p.add_argument("--out", required=True, help="corpus file to write")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--corpus", required=True)
    p.add_argument("--init", help="warm-start checkpoint")
    p.add_argument("--out", required=True, help="output directory")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a corpus")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--oracle", help="synthetic spec file enabling oracle scoring")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("eip", help="emotion interaction matrix of a labeled corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eip)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full gradient")
    p.add_argument("--config", help="overrides for the tiny check model")
    p.add_argument("--epsilon", type=float, default=1e-3)
    p.add_argument("--threshold", type=float, default=1e-2)
    p.add_argument("--corrupt", action="store_true", help="inject a gradient fault (check must fail)")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("chat", help="single-turn chat over stdin")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--emotion", default="Other", help="designated category for seq2seq_emb checkpoints")
    p.add_argument("--max-len", dest="max_len", type=int, default=None)
    p.set_defaults(func=cmd_chat)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
