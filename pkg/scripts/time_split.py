"""Train on one year of a drifting synthetic corpus and score every other year."""
import argparse

from dexcnn import nn
from dexcnn.experiments import run_time_split_experiment
from dexcnn.synth import SynthSpec, generate_synthetic_corpus


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--years", default="2013,2014,2015,2016")
    ap.add_argument("--drift", type=float, default=0.3)
    ap.add_argument("--samples", type=int, default=150)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    years = tuple(int(y) for y in args.years.split(","))
    corpus = generate_synthetic_corpus(
        SynthSpec(n_families=2, motifs_per_family=2, samples_per_class=args.samples, years=years,
                  year_drift=args.drift, seq_len_range=(100, 300), vocab_size=300), args.seed)
    h = nn.Hyperparams(seq_len=320, embed_dim=32, filters=64, hidden=64, dropout=0.2, epochs=8, lr=5e-3,
                       batch_size=16)
    report = run_time_split_experiment(corpus.manifest, corpus.sequences, h, args.seed)
    f1 = {tuple(p["axis"]): p["metrics"]["weighted_f1"] for p in report.points}
    same = report.aggregate["same_year_f1"]
    print("train\\test\t" + "\t".join(map(str, years)))
    for a in years:
        cells = [f"{same[str(a)]:.3f}*" if a == b else f"{f1[(a, b)]:.3f}" for b in years]
        print(f"{a}\t\t" + "\t".join(cells))
    print("* same-year holdout")


if __name__ == "__main__":
    main()
