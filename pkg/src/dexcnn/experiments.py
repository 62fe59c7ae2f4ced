"""Experiment drivers: k-fold evaluation, unseen-family, time split, block shuffle."""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, is_dataclass

import numpy as np

from . import nn
from .errors import (
    InsufficientYearsError,
    InvalidBlockCountError,
    NotEnoughSamplesError,
    UnknownFamilyError,
)
from .folds import kfold_split, stratified_holdout
from .manifest import CorpusManifest
from .metrics import ConfusionCounts, MetricsReport, compute_metrics
from .pipeline import Classifier, fit_classifier, task_labels
from .sequences import block_shuffle, discretize, unify

ELEMENT_LEVEL = "max"


@dataclass
class ExperimentReport:
    kind: str
    config: dict
    seeds: dict
    points: list[dict] = field(default_factory=list)
    aggregate: dict | None = None
    timing: dict = field(default_factory=dict)

    def add(self, axis, metrics, **extra) -> None:
        self.points.append({"axis": axis, "metrics": metrics, **extra})

    def to_dict(self, with_timing: bool = True) -> dict:
        d = {"kind": self.kind, "config": self.config, "seeds": self.seeds, "points": self.points}
        if self.aggregate is not None:
            d["aggregate"] = self.aggregate
        if with_timing:
            d["timing"] = self.timing
        return d

    def to_json(self, with_timing: bool = True) -> str:
        return json.dumps(self.to_dict(with_timing), indent=2, sort_keys=True, default=_jsonable)

    def to_csv(self) -> str:
        """Flatten scalar metrics, one row per axis point."""
        keys = sorted({k for p in self.points for k, v in p["metrics"].items() if isinstance(v, (int, float))})
        rows = [",".join(["axis"] + keys)]
        for p in self.points:
            rows.append(",".join([json.dumps(p["axis"]).replace(",", ";")] +
                                 [repr(p["metrics"].get(k, "")) for k in keys]))
        return "\n".join(rows) + "\n"


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if is_dataclass(obj):
        return asdict(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def hp_config(h: nn.Hyperparams) -> dict:
    return asdict(h)


def _score(clf: Classifier, seqs, y, paper_formula_fpr=False) -> MetricsReport:
    preds = [p.label for p in clf.predict(seqs)]
    positive = 1 if clf.hp.task == nn.DETECTION else None
    counts = ConfusionCounts.from_labels(y, preds, clf.class_names, positive)
    return compute_metrics(counts, paper_formula_fpr)


def run_kfold(manifest: CorpusManifest, seqs, k: int, h: nn.Hyperparams, seed: int,
              stratify: bool = True, cap: int | None = None, paper_formula_fpr: bool = False) -> ExperimentReport:
    """Train/test over k folds; the aggregate sums the per-fold confusion counts."""
    idx, y, classes = task_labels(manifest, h.task)
    sub = manifest.subset(idx)
    report = ExperimentReport("kfold", {"k": k, "stratify": stratify, "cap": cap, "task": h.task,
                                        "hyperparams": hp_config(h)}, {"seed": seed})
    total = None
    t0 = time.perf_counter()
    splits = kfold_split(sub, k, seed, stratify, by_family=h.task == nn.ATTRIBUTION)
    for fold, (tr, te) in enumerate(splits):
        start = time.perf_counter()
        clf, losses = fit_classifier([seqs[idx[i]] for i in tr], y[tr], classes, h, seed + fold, cap)
        m = _score(clf, [seqs[idx[i]] for i in te], y[te], paper_formula_fpr)
        total = m.counts if total is None else total + m.counts
        report.add(fold, m.to_dict(), train_size=len(tr), test_size=len(te), epoch_losses=losses)
        report.timing[f"fold{fold}_s"] = time.perf_counter() - start
    report.aggregate = compute_metrics(total, paper_formula_fpr).to_dict()
    report.timing["total_s"] = time.perf_counter() - t0
    return report


def run_unknown_family_experiment(manifest: CorpusManifest, seqs, family: str, train_sizes, h: nn.Hyperparams,
                                  seed: int, cap: int | None = None) -> ExperimentReport:
    """Detection recall on a family the model has seen ``n`` samples of, for each n.

    The family's samples are shuffled once; the last ``size - max(n)`` form the
    fixed test set, and each axis point adds the first ``n`` to a training set
    that otherwise holds every other app.
    """
    h = h.with_(task=nn.DETECTION)
    fam_idx = [i for i, r in enumerate(manifest.records) if r.family == family]
    if not fam_idx:
        raise UnknownFamilyError(family)
    sizes = sorted(set(int(n) for n in train_sizes))
    if sizes[0] < 0:
        raise NotEnoughSamplesError("train sizes must be non-negative")
    rng = np.random.default_rng(seed)
    fam_idx = list(rng.permutation(fam_idx))
    n_test = len(fam_idx) - sizes[-1]
    if n_test < 1:
        raise NotEnoughSamplesError(
            f"family {family!r} has {len(fam_idx)} samples; max train size {sizes[-1]} leaves no test samples")
    test = fam_idx[sizes[-1]:]
    others = [i for i, r in enumerate(manifest.records) if r.family != family]
    labels = np.array([int(r.is_malware) for r in manifest.records], dtype=np.int64)
    report = ExperimentReport("unknown-family", {"family": family, "train_sizes": sizes, "test_size": n_test,
                                                 "metric": "family detection recall",
                                                 "hyperparams": hp_config(h)}, {"seed": seed})
    for n in sizes:
        start = time.perf_counter()
        train = others + fam_idx[:n]
        clf, losses = fit_classifier([seqs[i] for i in train], labels[train], ["benign", "malware"], h, seed, cap)
        preds = clf.predict([seqs[i] for i in test])
        acc = float(np.mean([p.is_malware for p in preds]))
        report.add(n, {"accuracy": acc}, epoch_losses=losses)
        report.timing[f"n{n}_s"] = time.perf_counter() - start
    return report


def parse_block_counts(text: str) -> list:
    out = []
    for part in text.split(","):
        part = part.strip()
        out.append(ELEMENT_LEVEL if part == ELEMENT_LEVEL else int(part))
    return out


def shuffled_ids(clf: Classifier, seqs, n_blocks, seed: int) -> np.ndarray:
    """Discretize, block-shuffle (before truncation), then unify."""
    L = clf.hp.seq_len
    rng = np.random.default_rng(seed)
    out = np.zeros((len(seqs), L), dtype=np.int64)
    for i, s in enumerate(seqs):
        d = discretize(s, clf.dictionary, clf.hp.paper_compat)
        n = len(d.ids) if n_blocks == ELEMENT_LEVEL else int(n_blocks)
        if n_blocks != ELEMENT_LEVEL and len(d.ids) and n > len(d.ids):
            raise InvalidBlockCountError(f"{n} blocks exceed sequence length {len(d.ids)} of {s.source_id}")
        out[i] = unify(block_shuffle(d, max(n, 1), int(rng.integers(2**63))), L).ids
    return out


def run_shuffle_experiment(clf: Classifier, seqs, labels, block_counts, seed: int) -> ExperimentReport:
    """Weighted F1 on test sequences whose call order was block-shuffled, per block count."""
    labels = np.asarray(labels, dtype=np.int64)
    positive = 1 if clf.hp.task == nn.DETECTION else None

    def f1_of(ids):
        preds = [p.label for p in clf.predict_ids(ids)]
        return compute_metrics(ConfusionCounts.from_labels(labels, preds, clf.class_names, positive))

    report = ExperimentReport("shuffle", {"block_counts": list(block_counts), "test_size": len(seqs)},
                              {"seed": seed})
    base = f1_of(clf.encode(seqs))
    report.aggregate = {"baseline": base.to_dict()}
    for n in block_counts:
        start = time.perf_counter()
        m = f1_of(shuffled_ids(clf, seqs, n, seed))
        report.add(n, m.to_dict())
        report.timing[f"N{n}_s"] = time.perf_counter() - start
    return report


def run_time_split_experiment(manifest: CorpusManifest, seqs, h: nn.Hyperparams, seed: int,
                              holdout: float = 0.2, cap: int | None = None) -> ExperimentReport:
    """Train on one year, test on every other year.

    Each training year keeps a stratified ``holdout`` fraction back; F1 on it
    is reported separately as the same-year reference and never mixed into the
    cross-year points.
    """
    h = h.with_(task=nn.DETECTION)
    years = manifest.years()
    if len(years) < 2:
        raise InsufficientYearsError(f"need at least 2 distinct years, found {years}")
    labels = np.array([int(r.is_malware) for r in manifest.records], dtype=np.int64)
    buckets = {y: np.array([i for i, r in enumerate(manifest.records) if r.year == y]) for y in years}
    report = ExperimentReport("time-split", {"years": years, "holdout": holdout, "hyperparams": hp_config(h)},
                              {"seed": seed})
    same_year = {}
    for train_year in years:
        start = time.perf_counter()
        bucket = buckets[train_year]
        tr, ho = stratified_holdout(labels[bucket], holdout, seed)
        clf, _ = fit_classifier([seqs[i] for i in bucket[tr]], labels[bucket[tr]], ["benign", "malware"],
                                h, seed, cap)
        same = _score(clf, [seqs[i] for i in bucket[ho]], labels[bucket[ho]])
        same_year[str(train_year)] = same.weighted_f1
        for test_year in years:
            if test_year == train_year:
                continue
            tb = buckets[test_year]
            m = _score(clf, [seqs[i] for i in tb], labels[tb])
            report.add([train_year, test_year], m.to_dict())
        report.timing[f"train{train_year}_s"] = time.perf_counter() - start
    report.aggregate = {"same_year_f1": same_year}
    return report
