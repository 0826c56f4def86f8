"""Train every decoder mode on one synthetic split and compare hold-out BLEU.

The output has the shape of an ablation table: one JSON line per mode with
train loss and BLEU-1..4 on the held-out scenes.  Absolute numbers say
nothing about natural images; the point is the relative ordering under a
fixed budget.

    python scripts/synthetic_ablation.py --scenes 200 --epochs 60
"""
import argparse
import json
import tempfile

from threeg.data import build_vocab, gen_synthetic, load_examples, preprocess
from threeg.decode import corpus_bleu, greedy_decode
from threeg.model import Mode, ModelConfig, init_params
from threeg.training import OptimizerState, train


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--scenes", type=int, default=200)
    p.add_argument("--holdout", type=int, default=20)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--mode", action="append", help="restrict to these modes")
    args = p.parse_args()

    manifest, _ = gen_synthetic(args.seed, args.scenes, tempfile.mkdtemp())
    train_entries = manifest.entries[:-args.holdout]
    hold_entries = manifest.entries[-args.holdout:]
    vocab = build_vocab([preprocess(c) for e in train_entries for c in e.captions])
    examples = load_examples(manifest, vocab, train_entries)
    refs = [[preprocess(c) for c in e.captions] for e in hold_entries]
    feats = [manifest.load_features(e) for e in hold_entries]

    for mode in args.mode or [m.value for m in Mode]:
        config = ModelConfig(h=args.hidden, N0=len(vocab), l=manifest.l, C=manifest.C, D=manifest.D, mode=mode)
        store = init_params(config, seed=0)
        history = train(examples, store, config, OptimizerState.for_store(store, lr=args.lr), args.epochs, args.seed)
        cands = [greedy_decode(f, store, config).words(vocab) for f in feats]
        row = {"mode": config.mode.value, "train_loss": round(history[-1]["mean_loss"], 4)}
        row.update({k: round(v, 4) if isinstance(v, float) else v for k, v in corpus_bleu(cands, refs).to_dict().items()})
        print(json.dumps(row), flush=True)


if __name__ == "__main__":
    main()
