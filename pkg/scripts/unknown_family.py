"""Detection recall on a held-out family versus how many of its samples enter training."""
import argparse

from dexcnn import nn
from dexcnn.experiments import run_unknown_family_experiment
from dexcnn.synth import SynthSpec, generate_synthetic_corpus


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--families", type=int, default=4)
    ap.add_argument("--samples", type=int, default=120)
    ap.add_argument("--shared-rate", type=float, default=0.3,
                    help="share of malware carrying a motif common to all families")
    ap.add_argument("--family", default="fam02")
    ap.add_argument("--train-sizes", default="0,5,10,15,20,30")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    corpus = generate_synthetic_corpus(
        SynthSpec(n_families=args.families, samples_per_class=args.samples, seq_len_range=(100, 300),
                  vocab_size=300, shared_motif_rate=args.shared_rate), args.seed)
    h = nn.Hyperparams(seq_len=320, embed_dim=32, filters=64, hidden=64, dropout=0.2, epochs=8, lr=5e-3,
                       batch_size=16)
    sizes = [int(s) for s in args.train_sizes.split(",")]
    report = run_unknown_family_experiment(corpus.manifest, corpus.sequences, args.family, sizes, h, args.seed)
    print(f"family {args.family}, {report.config['test_size']} test samples")
    print("n\taccuracy")
    for p in report.points:
        print(f"{p['axis']}\t{p['metrics']['accuracy']:.3f}")


if __name__ == "__main__":
    main()
