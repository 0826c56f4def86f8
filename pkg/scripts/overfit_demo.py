"""Memorize one synthetic scene and print the loss curve and the decoded caption.

    python scripts/overfit_demo.py --seed 3 --epochs 500 --lr 3e-3
"""
import argparse
import tempfile

from threeg.data import build_vocab, gen_synthetic, load_examples, manifest_corpus
from threeg.decode import emit_trace, greedy_decode
from threeg.model import ModelConfig, init_params
from threeg.training import OptimizerState, train


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=3)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--lr", type=float, default=3e-3)
    p.add_argument("--mode", default="THREE_G")
    p.add_argument("--trace", help="write the gate/attention trace of the decoded caption here")
    args = p.parse_args()

    manifest, _ = gen_synthetic(args.seed, 1, tempfile.mkdtemp())
    vocab = build_vocab(manifest_corpus(manifest), min_count=1)
    examples = load_examples(manifest, vocab)
    config = ModelConfig(h=args.hidden, N0=len(vocab), l=manifest.l, C=manifest.C, D=manifest.D, mode=args.mode)
    store = init_params(config, seed=0)

    def report(row):
        if row["epoch"] == 1 or row["epoch"] % 50 == 0:
            print(f"epoch {row['epoch']:4d}  loss {row['mean_loss']:.6f}")

    train(examples, store, config, OptimizerState.for_store(store, lr=args.lr), args.epochs, args.seed,
          on_epoch=report)
    feats, _ = examples[0]
    hyp = greedy_decode(feats, store, config)
    print("reference:", manifest.entries[0].captions[0])
    print("decoded:  ", " ".join(hyp.words(vocab)))
    if args.trace:
        emit_trace(hyp, args.trace, vocab)


if __name__ == "__main__":
    main()
