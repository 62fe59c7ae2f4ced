"""Detection F1/FPR under 2-, 3-, 5- and 10-fold cross-validation on a synthetic corpus."""
import argparse

from dexcnn import nn
from dexcnn.experiments import run_kfold
from dexcnn.synth import SynthSpec, generate_synthetic_corpus


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--samples", type=int, default=200)
    ap.add_argument("--noise", type=float, default=0.1)
    ap.add_argument("--seq-len", type=int, default=512)
    ap.add_argument("--epochs", type=int, default=6)
    ap.add_argument("--folds", default="2,3,5,10")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    corpus = generate_synthetic_corpus(
        SynthSpec(n_families=3, samples_per_class=args.samples, noise_rate=args.noise), args.seed)
    h = nn.Hyperparams(seq_len=args.seq_len, embed_dim=32, filters=128, hidden=64, epochs=args.epochs,
                       lr=5e-3, batch_size=16)
    print("k\tF1%\tP%\tR%\tFPR%")
    for k in map(int, args.folds.split(",")):
        agg = run_kfold(corpus.manifest, corpus.sequences, k, h, args.seed).aggregate
        print(f"{k}\t{agg['weighted_f1'] * 100:.4f}\t{agg['weighted_precision'] * 100:.4f}\t"
              f"{agg['weighted_recall'] * 100:.4f}\t{agg['fpr'] * 100:.2f}")


if __name__ == "__main__":
    main()
