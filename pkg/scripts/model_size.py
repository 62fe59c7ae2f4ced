"""Parameter count, F1 and per-app timing across the vocabulary-size presets."""
import argparse
import tempfile

from dexcnn import nn
from dexcnn.bench import benchmark_runtime
from dexcnn.folds import stratified_holdout
from dexcnn.manifest import load_manifest
from dexcnn.metrics import ConfusionCounts, compute_metrics
from dexcnn.pipeline import fit_classifier, task_labels
from dexcnn.synth import SynthSpec, generate_synthetic_corpus, write_corpus


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--samples", type=int, default=200)
    ap.add_argument("--vocab", type=int, default=3000)
    ap.add_argument("--scale", type=int, default=100,
                    help="divide each preset's vocabulary cap by this to fit the synthetic vocabulary")
    ap.add_argument("--bench-apps", type=int, default=40)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    corpus = generate_synthetic_corpus(
        SynthSpec(n_families=2, samples_per_class=args.samples, vocab_size=args.vocab, noise_rate=0.1), args.seed)
    _, y, classes = task_labels(corpus.manifest, nn.DETECTION)
    tr, te = stratified_holdout(y, 0.3, args.seed)
    seqs = corpus.sequences
    h = nn.Hyperparams(seq_len=512, epochs=3)

    with tempfile.TemporaryDirectory() as tmp:
        write_corpus(corpus, tmp, pad_resources=200_000, seed=args.seed)
        bench_manifest = load_manifest(f"{tmp}/manifest.tsv").subset(range(args.bench_apps))
        print("preset\tcap\t#params\tF1%\tpreprocess ms\tpredict ms")
        for preset, cap in sorted(nn.PRESET_VOCAB.items()):
            cap //= args.scale
            clf, _ = fit_classifier([seqs[i] for i in tr], y[tr], classes, h, args.seed, cap)
            preds = [p.label for p in clf.predict([seqs[i] for i in te])]
            f1 = compute_metrics(ConfusionCounts.from_labels(y[te], preds, classes, 1)).weighted_f1
            b = benchmark_runtime(bench_manifest, clf)
            pre = sum(r.preprocess_ms for r in b.rows) / len(b.rows)
            print(f"{preset}\t{cap}\t{clf.params.n_parameters()}\t{f1 * 100:.2f}\t{pre:.2f}\t{b.predict_mean_ms:.2f}")


if __name__ == "__main__":
    main()
