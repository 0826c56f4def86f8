"""Command-line entry point: ``threeg <subcommand> --flag value ...``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import data, gradcheck
from .decode import beam_decode, corpus_bleu, emit_trace, greedy_decode
from .errors import DataError, DimensionError, FormatError, NumericError
from .model import Mode, ModelConfig, init_params, parse_mode
from .training import (
    OptimizerState,
    checkpoint_path,
    load_checkpoint,
    save_checkpoint,
    train,
)

log = logging.getLogger("threeg")


def _emit(obj):
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


def _mode(name):
    try:
        return parse_mode(name)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser():
    p = argparse.ArgumentParser(prog="threeg", description="Gated global/local captioning models.",
                                allow_abbrev=False)
    sub = p.add_subparsers(dest="command", required=True)
    _add = sub.add_parser
    sub.add_parser = lambda *a, **kw: _add(*a, allow_abbrev=False, **kw)

    s = sub.add_parser("synth", help="write a synthetic scene dataset")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--scenes", type=int, default=200)
    s.add_argument("--grid", type=int, default=9)
    s.add_argument("--out", required=True)

    t = sub.add_parser("train", help="train a model on a manifest")
    t.add_argument("--manifest", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int, required=True)
    t.add_argument("--epochs", type=int, default=10)
    t.add_argument("--hidden", type=int, default=32)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--mode", type=_mode, default=Mode.THREE_G)
    t.add_argument("--max-len", type=int, default=30)
    t.add_argument("--min-count", type=int, default=5)
    t.add_argument("--checkpoint", help="resume from this checkpoint")

    for name, helptext in (("generate", "decode captions"), ("evaluate", "corpus BLEU-1..4"),
                           ("inspect", "write gate/attention traces")):
        g = sub.add_parser(name, help=helptext)
        g.add_argument("--manifest", required=True)
        g.add_argument("--checkpoint", required=True)
        g.add_argument("--beam", type=int, default=1)
        g.add_argument("--max-len", type=int)
        if name == "inspect":
            g.add_argument("--out", required=True)

    a = sub.add_parser("ablate", help="train and score every mode on one manifest")
    a.add_argument("--manifest", required=True)
    a.add_argument("--seed", type=int, required=True)
    a.add_argument("--epochs", type=int, default=10)
    a.add_argument("--hidden", type=int, default=32)
    a.add_argument("--lr", type=float, default=1e-3)
    a.add_argument("--min-count", type=int, default=5)
    a.add_argument("--beam", type=int, default=1)
    a.add_argument("--mode", type=_mode, action="append", help="restrict to these modes")

    c = sub.add_parser("gradcheck", help="finite-difference check of BPTT gradients")
    c.add_argument("--seed", type=int, required=True)
    c.add_argument("--hidden", type=int, default=8)
    c.add_argument("--mode", type=_mode, default=Mode.THREE_G)
    return p


def _decode(feats, store, config, beam, max_len):
    if beam == 1:
        return greedy_decode(feats, store, config, max_len=max_len)
    return beam_decode(feats, store, config, beam, max_len=max_len)[0]


def _vocab_and_examples(manifest, min_count):
    vocab = data.build_vocab(data.manifest_corpus(manifest), min_count=min_count)
    return vocab, data.load_examples(manifest, vocab)


def cmd_synth(args):
    manifest, _ = data.gen_synthetic(args.seed, args.scenes, args.out, grid=args.grid)
    _emit({"scenes": len(manifest.entries), "manifest": os.path.join(args.out, "manifest.jsonl"),
           "l": manifest.l, "C": manifest.C, "D": manifest.D})


def cmd_train(args):
    manifest = data.read_manifest(args.manifest)
    os.makedirs(args.out, exist_ok=True)
    if args.checkpoint:
        ck = load_checkpoint(args.checkpoint)
        config, store, opt, vocab, start = ck.config, ck.store, ck.opt, ck.vocab, ck.epoch
        if vocab is None:
            raise DataError(f"{args.checkpoint}: checkpoint carries no vocabulary")
        examples = data.load_examples(manifest, vocab)
    else:
        vocab, examples = _vocab_and_examples(manifest, args.min_count)
        config = ModelConfig(h=args.hidden, N0=len(vocab), l=manifest.l, C=manifest.C, D=manifest.D,
                             mode=args.mode, max_len=args.max_len)
        store = init_params(config, seed=args.seed)
        opt = OptimizerState.for_store(store, lr=args.lr)
        start = 0
        save_checkpoint(checkpoint_path(args.out, 0), store, config, opt, 0, args.seed, vocab)
    train(examples, store, config, opt, args.epochs, args.seed, start_epoch=start,
          checkpoint_dir=args.out, vocab=vocab, on_epoch=_emit)


def _load_for_inference(args):
    ck = load_checkpoint(args.checkpoint)
    if ck.vocab is None:
        raise DataError(f"{args.checkpoint}: checkpoint carries no vocabulary")
    manifest = data.read_manifest(args.manifest)
    if (manifest.l, manifest.C, manifest.D) != (ck.config.l, ck.config.C, ck.config.D):
        raise DataError("manifest feature dims do not match the checkpoint's model")
    return ck, manifest


def cmd_generate(args):
    ck, manifest = _load_for_inference(args)
    for entry in manifest.entries:
        hyp = _decode(manifest.load_features(entry), ck.store, ck.config, args.beam, args.max_len)
        _emit({"id": entry.image_id, "caption": " ".join(hyp.words(ck.vocab)),
               "tokens": hyp.tokens, "logprob": hyp.logprob})


def cmd_evaluate(args):
    ck, manifest = _load_for_inference(args)
    cands, refs = [], []
    for entry in manifest.entries:
        hyp = _decode(manifest.load_features(entry), ck.store, ck.config, args.beam, args.max_len)
        cands.append(hyp.words(ck.vocab))
        refs.append([data.preprocess(c) for c in entry.captions])
    _emit(corpus_bleu(cands, refs).to_dict())


def cmd_inspect(args):
    ck, manifest = _load_for_inference(args)
    os.makedirs(args.out, exist_ok=True)
    for entry in manifest.entries:
        hyp = _decode(manifest.load_features(entry), ck.store, ck.config, args.beam, args.max_len)
        path = os.path.join(args.out, f"{entry.image_id}.csv")
        emit_trace(hyp, path, ck.vocab)
        _emit({"id": entry.image_id, "trace": path, "caption": " ".join(hyp.words(ck.vocab))})


def cmd_ablate(args):
    manifest = data.read_manifest(args.manifest)
    vocab, examples = _vocab_and_examples(manifest, args.min_count)
    refs = [[data.preprocess(c) for c in e.captions] for e in manifest.entries]
    feats = [manifest.load_features(e) for e in manifest.entries]
    for mode in args.mode or list(Mode):
        config = ModelConfig(h=args.hidden, N0=len(vocab), l=manifest.l, C=manifest.C, D=manifest.D, mode=mode)
        store = init_params(config, seed=args.seed)
        opt = OptimizerState.for_store(store, lr=args.lr)
        history = train(examples, store, config, opt, args.epochs, args.seed)
        cands = [_decode(f, store, config, args.beam, None).words(vocab) for f in feats]
        row = {"mode": mode.value, "final_loss": history[-1]["mean_loss"] if history else None}
        row.update(corpus_bleu(cands, refs).to_dict())
        _emit(row)


def cmd_gradcheck(args):
    report = gradcheck.run(args.seed, args.mode, h=args.hidden)
    out = report.to_dict()
    out["passed"] = bool(report.overall < gradcheck.TOLERANCE)
    out["mode"] = parse_mode(args.mode).value
    _emit(out)
    return 0 if out["passed"] else 1


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
    "inspect": cmd_inspect,
    "ablate": cmd_ablate,
    "gradcheck": cmd_gradcheck,
}


def dispatch(argv=None):
    """Run one subcommand. Exit codes: 0 ok, 1 data/format error, 2 usage error."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr, format="%(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args) or 0
    except (DataError, FormatError, DimensionError, NumericError, OSError, KeyError,
            json.JSONDecodeError) as exc:
        print(f"threeg {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"threeg {args.command}: error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(dispatch())
