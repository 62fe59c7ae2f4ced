"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 input/parse failure, 3 configuration
or model mismatch.  Results go to stdout, diagnostics to stderr, machine
reports to the ``--report`` path.
"""
from __future__ import annotations

import argparse
import json
import sys

from . import experiments as ex
from . import nn
from .bench import benchmark_runtime
from .errors import DexCnnError, DigestMismatchError, IngestError, StoreError
from .folds import stratified_holdout
from .manifest import CorpusManifest, load_manifest
from .pipeline import Classifier, app_sequence, fit_classifier, load_sequences, task_labels
from .sequences import ApiDictionary
from .store import check_digest, load_model, save_model
from .synth import SynthSpec, generate_synthetic_corpus, write_corpus

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_CONFIG = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def diag(msg: str) -> None:
    print(f"dexcnn: {msg}", file=sys.stderr)


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _add_hyper(p):
    g = p.add_argument_group("model")
    g.add_argument("--task", choices=nn.TASKS)
    g.add_argument("--seq-len", type=int, default=512)
    g.add_argument("--embed-dim", type=int, default=64)
    g.add_argument("--filters", type=int, default=512)
    g.add_argument("--kernel", type=int, default=3)
    g.add_argument("--hidden", type=int, default=256)
    g.add_argument("--dropout", type=float, default=0.5)
    g.add_argument("--epochs", type=int, default=10)
    g.add_argument("--lr", type=float, default=1e-3)
    g.add_argument("--batch", type=int, default=32)
    g.add_argument("--no-batchnorm", action="store_true")
    g.add_argument("--vocab-cap", type=int)
    g.add_argument("--preset", type=int, choices=sorted(nn.PRESET_VOCAB), default=4,
                   help="model size preset 1 (largest vocabulary) .. 4 (smallest)")
    g.add_argument("--paper-compat", action="store_true", help="map unknown calls to 0, same as padding")


def _add_common(p, manifest=True):
    if manifest:
        p.add_argument("--manifest")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--report")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dexcnn", description="API call-sequence malware detection and family attribution")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    parser.subcommands = sub.choices

    p = sub.add_parser("train", help="extract, build dictionary, train, save")
    _add_common(p)
    _add_hyper(p)
    p.add_argument("--out")
    p.add_argument("--dict")

    for name in ("detect", "attribute"):
        p = sub.add_parser(name, help=f"{name} apps with a trained model")
        _add_common(p)
        p.add_argument("--model")
        p.add_argument("--dict")
        p.add_argument("apps", nargs="*")
        if name == "attribute":
            p.add_argument("--topk", type=int, default=1)

    p = sub.add_parser("eval", help="k-fold cross-validation")
    _add_common(p)
    _add_hyper(p)
    p.add_argument("--kfold", type=int, default=10)
    p.add_argument("--no-stratify", action="store_true")
    p.add_argument("--paper-formula-fpr", action="store_true")

    p = sub.add_parser("experiment", help="robustness experiments")
    p.add_argument("kind", choices=("shuffle", "unknown-family", "time-split"))
    _add_common(p)
    _add_hyper(p)
    p.add_argument("--model")
    p.add_argument("--dict")
    p.add_argument("--blocks", default="4,16,64,max")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--family")
    p.add_argument("--train-sizes", default="0,5,10,20")

    p = sub.add_parser("bench", help="time preprocessing and prediction per app")
    _add_common(p)
    p.add_argument("--model")
    p.add_argument("--dict")
    p.add_argument("--repeats", type=int, default=1)

    p = sub.add_parser("synth", help="write a planted-motif synthetic corpus")
    p.add_argument("--out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--families", type=int, default=1)
    p.add_argument("--motifs", type=int, default=1)
    p.add_argument("--samples", type=int, default=500, help="apps per class (benign, and each family)")
    p.add_argument("--vocab", type=int, default=400)
    p.add_argument("--min-len", type=int, default=200)
    p.add_argument("--max-len", type=int, default=480)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--years", default="")
    p.add_argument("--drift", type=float, default=0.0)
    p.add_argument("--shared-rate", type=float, default=0.0)
    p.add_argument("--no-benign", action="store_true")
    p.add_argument("--pad-resources", type=int, default=0)
    return parser


def _require(args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if not getattr(args, n, None)]
    if missing:
        raise CliError(EXIT_USAGE, f"{args.command} requires {', '.join(missing)}")


def _hyper(args) -> nn.Hyperparams:
    try:
        return nn.Hyperparams(
            seq_len=args.seq_len, embed_dim=args.embed_dim, filters=args.filters, kernel=args.kernel,
            hidden=args.hidden, dropout=args.dropout, epochs=args.epochs, lr=args.lr, batch_size=args.batch,
            task=args.task or nn.DETECTION, batchnorm=not args.no_batchnorm, paper_compat=args.paper_compat,
        )
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from exc


def _cap(args) -> int:
    return args.vocab_cap if args.vocab_cap is not None else nn.PRESET_VOCAB[args.preset]


def _manifest(args) -> CorpusManifest:
    try:
        return load_manifest(args.manifest)
    except (IngestError, OSError) as exc:
        raise CliError(EXIT_INPUT, f"manifest {args.manifest}: {exc}") from exc


def _sequences(manifest: CorpusManifest, threads: int):
    """Extract all apps, dropping (and reporting) the ones that fail."""
    results = load_sequences(manifest, threads)
    keep = []
    for i, r in enumerate(results):
        if isinstance(r, Exception):
            diag(f"{manifest.records[i].app_path}: {type(r).__name__}: {r}")
        else:
            keep.append(i)
    if not keep:
        raise CliError(EXIT_INPUT, "no app in the manifest could be read")
    return manifest.subset(keep), [results[i] for i in keep]


def _check_task_data(manifest: CorpusManifest, task: str) -> None:
    if task == nn.DETECTION:
        n_mal = sum(r.is_malware for r in manifest.records)
        if n_mal == 0 or n_mal == len(manifest):
            raise CliError(EXIT_CONFIG, f"detection needs both benign and malware apps "
                                        f"(manifest has {n_mal} malware, {len(manifest) - n_mal} benign)")
    elif len(manifest.families()) < 2:
        raise CliError(EXIT_CONFIG, "attribution needs malware from at least 2 families")


def _write_report(path, payload) -> None:
    if not path:
        return
    text = payload if isinstance(payload, str) else json.dumps(payload, indent=2, sort_keys=True, default=ex._jsonable)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError(EXIT_INPUT, f"cannot write report {path}: {exc}") from exc


def _load_classifier(args, task: str | None = None) -> Classifier:
    try:
        params, digest, names = load_model(args.model)
        dictionary = ApiDictionary.load(args.dict)
    except StoreError as exc:
        raise CliError(EXIT_INPUT if not isinstance(exc, DigestMismatchError) else EXIT_CONFIG, str(exc)) from exc
    except (OSError, ValueError) as exc:
        raise CliError(EXIT_INPUT, f"dictionary {args.dict}: {exc}") from exc
    try:
        check_digest(digest, dictionary)
    except DigestMismatchError as exc:
        raise CliError(EXIT_CONFIG, f"{exc} ({args.model} vs {args.dict})") from exc
    if task is not None and params.hp.task != task:
        raise CliError(EXIT_CONFIG, f"{args.model} is a {params.hp.task} model, {args.command} needs {task}")
    return Classifier(params, dictionary, names)


def cmd_train(args) -> int:
    _require(args, "task", "manifest", "out")
    h = _hyper(args)
    manifest = _manifest(args)
    _check_task_data(manifest, h.task)
    manifest, seqs = _sequences(manifest, args.threads)
    _check_task_data(manifest, h.task)
    idx, y, classes = task_labels(manifest, h.task)
    clf, losses = fit_classifier([seqs[i] for i in idx], y, classes, h, args.seed, _cap(args))
    dict_path = args.dict or args.out + ".dict"
    try:
        clf.dictionary.save(dict_path)
    except OSError as exc:
        raise CliError(EXIT_INPUT, f"cannot write dictionary {dict_path}: {exc}") from exc
    save_model(clf.params, clf.dictionary.digest, args.out, clf.class_names)
    log = {"task": h.task, "classes": classes, "train_size": int(len(idx)), "vocab_size": len(clf.dictionary),
           "epoch_losses": losses, "hyperparams": ex.hp_config(clf.hp), "seed": args.seed}
    _write_report(args.report, log)
    for epoch, loss in enumerate(losses, 1):
        diag(f"epoch {epoch}: loss {loss:.6f}")
    print(f"model\t{args.out}\ndictionary\t{dict_path}")
    return EXIT_OK


def _app_paths(args) -> list[str]:
    paths = list(args.apps)
    if args.manifest:
        m = _manifest(args)
        paths += [m.resolve(r) for r in m.records]
    if not paths:
        raise CliError(EXIT_USAGE, f"{args.command} needs at least one app path or --manifest")
    return paths


def _scan(args, clf: Classifier, paths):
    ok = []
    for path in paths:
        try:
            ok.append((path, app_sequence(path)))
        except (DexCnnError, OSError) as exc:
            diag(f"{path}: {type(exc).__name__}: {exc}")
    if not ok:
        raise CliError(EXIT_INPUT, "every input failed")
    preds = clf.predict([s for _, s in ok])
    return [(path, p) for (path, _), p in zip(ok, preds)]


def cmd_detect(args) -> int:
    _require(args, "model", "dict")
    clf = _load_classifier(args, nn.DETECTION)
    results = _scan(args, clf, _app_paths(args))
    rows = []
    for path, p in results:
        decision = "malware" if p.is_malware else "benign"
        print(f"{path}\t{p.score:.6f}\t{decision}")
        rows.append({"path": path, "score": p.score, "decision": decision})
    _write_report(args.report, {"kind": "detect", "results": rows})
    return EXIT_OK


def cmd_attribute(args) -> int:
    _require(args, "model", "dict")
    if args.topk < 1:
        raise CliError(EXIT_USAGE, "--topk must be >= 1")
    clf = _load_classifier(args, nn.ATTRIBUTION)
    results = _scan(args, clf, _app_paths(args))
    rows = []
    for path, p in results:
        order = sorted(range(len(p.probs)), key=lambda i: (-p.probs[i], i))[:args.topk]
        top = [(clf.class_names[i], float(p.probs[i])) for i in order]
        print(path + "".join(f"\t{name}\t{prob:.6f}" for name, prob in top))
        rows.append({"path": path, "family": clf.class_names[p.family], "top": top,
                     "probabilities": dict(zip(clf.class_names, map(float, p.probs)))})
    _write_report(args.report, {"kind": "attribute", "results": rows})
    return EXIT_OK


def cmd_eval(args) -> int:
    _require(args, "manifest")
    h = _hyper(args)
    manifest, seqs = _sequences(_manifest(args), args.threads)
    _check_task_data(manifest, h.task)
    try:
        report = ex.run_kfold(manifest, seqs, args.kfold, h, args.seed, not args.no_stratify,
                              _cap(args), args.paper_formula_fpr)
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from exc
    agg = report.aggregate
    print(f"folds\t{args.kfold}\tweighted_f1\t{agg['weighted_f1']:.6f}\tfpr\t{agg['fpr']:.6f}\tacc\t{agg['acc']:.6f}")
    _write_report(args.report, report.to_json())
    return EXIT_OK


def cmd_experiment(args) -> int:
    _require(args, "manifest")
    h = _hyper(args)
    manifest, seqs = _sequences(_manifest(args), args.threads)
    try:
        if args.kind == "shuffle":
            blocks = ex.parse_block_counts(args.blocks)
            if args.model:
                _require(args, "dict")
                clf = _load_classifier(args)
                idx, y, _ = task_labels(manifest, clf.hp.task, clf.class_names if clf.hp.task == nn.ATTRIBUTION else None)
                test_seqs, test_y = [seqs[i] for i in idx], y
            else:
                _check_task_data(manifest, h.task)
                idx, y, classes = task_labels(manifest, h.task)
                tr, te = stratified_holdout(y, args.test_fraction, args.seed)
                clf, _ = fit_classifier([seqs[idx[i]] for i in tr], y[tr], classes, h, args.seed, _cap(args))
                test_seqs, test_y = [seqs[idx[i]] for i in te], y[te]
            report = ex.run_shuffle_experiment(clf, test_seqs, test_y, blocks, args.seed)
            for p in report.points:
                print(f"{p['axis']}\t{p['metrics']['weighted_f1']:.6f}")
        elif args.kind == "unknown-family":
            _require(args, "family")
            report = ex.run_unknown_family_experiment(manifest, seqs, args.family, _ints(args.train_sizes),
                                                      h, args.seed, _cap(args))
            for p in report.points:
                print(f"{p['axis']}\t{p['metrics']['accuracy']:.6f}")
        else:
            report = ex.run_time_split_experiment(manifest, seqs, h, args.seed, args.test_fraction, _cap(args))
            for p in report.points:
                a, b = p["axis"]
                print(f"{a}\t{b}\t{p['metrics']['weighted_f1']:.6f}")
    except KeyError as exc:
        raise CliError(EXIT_CONFIG, f"unknown family {exc}") from exc
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from exc
    _write_report(args.report, report.to_json())
    return EXIT_OK


def cmd_bench(args) -> int:
    _require(args, "manifest", "model", "dict")
    clf = _load_classifier(args)
    report = benchmark_runtime(_manifest(args), clf, args.repeats)
    for r in report.rows:
        if r.error:
            diag(f"{r.path}: {r.error}")
        else:
            print(f"{r.path}\t{r.apk_size}\t{r.dex_size}\t{r.preprocess_ms:.3f}\t{r.predict_ms:.3f}")
    diag(f"corr(preprocess, dex size) = {report.corr_dex}; corr(preprocess, apk size) = {report.corr_apk}")
    _write_report(args.report, report.to_dict())
    return EXIT_OK


def cmd_synth(args) -> int:
    _require(args, "out")
    spec = SynthSpec(
        n_families=args.families, motifs_per_family=args.motifs, vocab_size=args.vocab,
        seq_len_range=(args.min_len, args.max_len), samples_per_class=args.samples, noise_rate=args.noise,
        year_drift=args.drift, years=tuple(_ints(args.years)), shared_motif_rate=args.shared_rate,
        benign=not args.no_benign,
    )
    try:
        corpus = generate_synthetic_corpus(spec, args.seed)
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from exc
    path = write_corpus(corpus, args.out, args.pad_resources, args.seed)
    print(path)
    return EXIT_OK


COMMANDS = {
    "train": cmd_train, "detect": cmd_detect, "attribute": cmd_attribute, "eval": cmd_eval,
    "experiment": cmd_experiment, "bench": cmd_bench, "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        if exc.code == EXIT_USAGE:
            parser.subcommands[args.command].print_usage(sys.stderr)
        diag(str(exc))
        return exc.code
    except StoreError as exc:
        diag(str(exc))
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
