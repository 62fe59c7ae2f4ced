"""Confusion counts and the precision/recall/F1/FPR/FNR/ACC report."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InconsistentCountsError


@dataclass
class ConfusionCounts:
    """One-vs-rest TP/FP/FN/TN per class, all taken from the same test set.

    For detection the classes are ``("benign", "malware")`` and ``positive``
    names malware.
    """

    classes: tuple[str, ...]
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    tn: np.ndarray
    positive: int | None = None

    def __post_init__(self):
        for name in ("tp", "fp", "fn", "tn"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        n = len(self.classes)
        if any(getattr(self, a).shape != (n,) for a in ("tp", "fp", "fn", "tn")):
            raise InconsistentCountsError("one count per class required")
        if any((getattr(self, a) < 0).any() for a in ("tp", "fp", "fn", "tn")):
            raise InconsistentCountsError("counts must be non-negative")
        totals = self.tp + self.fp + self.fn + self.tn
        if len(set(totals.tolist())) > 1:
            raise InconsistentCountsError(f"per-class totals disagree: {totals.tolist()}")
        if n > 1 and self.fp.sum() != self.fn.sum():
            raise InconsistentCountsError("false positives and false negatives must balance across classes")

    @property
    def total(self) -> int:
        return int(self.tp[0] + self.fp[0] + self.fn[0] + self.tn[0])

    @property
    def support(self) -> np.ndarray:
        return self.tp + self.fn

    @classmethod
    def binary(cls, tp: int, fp: int, fn: int, tn: int) -> "ConfusionCounts":
        """Detection counts with malware as the positive class."""
        return cls(("benign", "malware"), [tn, tp], [fn, fp], [fp, fn], [tp, tn], positive=1)

    @classmethod
    def from_matrix(cls, matrix, classes, positive: int | None = None) -> "ConfusionCounts":
        """``matrix[actual, predicted]`` -> one-vs-rest counts."""
        m = np.asarray(matrix, dtype=np.int64)
        tp = np.diag(m)
        fp = m.sum(axis=0) - tp
        fn = m.sum(axis=1) - tp
        tn = m.sum() - tp - fp - fn
        return cls(tuple(classes), tp, fp, fn, tn, positive)

    @classmethod
    def from_labels(cls, actual, predicted, classes, positive: int | None = None) -> "ConfusionCounts":
        n = len(classes)
        m = np.zeros((n, n), dtype=np.int64)
        np.add.at(m, (np.asarray(actual, dtype=np.int64), np.asarray(predicted, dtype=np.int64)), 1)
        return cls.from_matrix(m, classes, positive)

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        if self.classes != other.classes:
            raise InconsistentCountsError("cannot add counts over different classes")
        return ConfusionCounts(self.classes, self.tp + other.tp, self.fp + other.fp,
                               self.fn + other.fn, self.tn + other.tn, self.positive)

    def to_dict(self) -> dict:
        return {"classes": list(self.classes), "tp": self.tp.tolist(), "fp": self.fp.tolist(),
                "fn": self.fn.tolist(), "tn": self.tn.tolist(), "positive": self.positive}


def _ratio(num, den, flags, name):
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


@dataclass
class MetricsReport:
    precision: dict[str, float]
    recall: dict[str, float]
    f1: dict[str, float]
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    fpr: float
    fnr: float
    acc: float
    counts: ConfusionCounts
    undefined: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
            "weighted_precision": self.weighted_precision, "weighted_recall": self.weighted_recall,
            "weighted_f1": self.weighted_f1, "fpr": self.fpr, "fnr": self.fnr, "acc": self.acc,
            "counts": self.counts.to_dict(), "undefined": list(self.undefined),
        }


def compute_metrics(c: ConfusionCounts, paper_formula_fpr: bool = False) -> MetricsReport:
    """Per-class and support-weighted P/R/F1, plus FPR, FNR and accuracy.

    FPR is FP/(FP+TN).  ``paper_formula_fpr`` switches to FP/(FP+TP) for
    comparison.  With a positive class FPR/FNR are that class's rates;
    otherwise they are support-weighted one-vs-rest averages.  A 0/0 term is
    reported as 0 and its name recorded in ``undefined``.
    """
    flags: list[str] = []
    precision, recall, f1 = {}, {}, {}
    fprs, fnrs = [], []
    for i, name in enumerate(c.classes):
        tp, fp, fn, tn = (int(a[i]) for a in (c.tp, c.fp, c.fn, c.tn))
        p = _ratio(tp, tp + fp, flags, f"precision[{name}]")
        r = _ratio(tp, tp + fn, flags, f"recall[{name}]")
        precision[name], recall[name] = p, r
        f1[name] = _ratio(2 * p * r, p + r, flags, f"f1[{name}]")
        den = fp + tp if paper_formula_fpr else fp + tn
        fprs.append(_ratio(fp, den, flags, f"fpr[{name}]"))
        fnrs.append(_ratio(fn, fn + tp, flags, f"fnr[{name}]"))

    support = c.support.astype(float)
    total_support = support.sum()

    def weighted(values: dict[str, float]) -> float:
        if total_support == 0:
            return 0.0
        return float(sum(support[i] * values[n] for i, n in enumerate(c.classes)) / total_support)

    if c.positive is not None:
        fpr, fnr = fprs[c.positive], fnrs[c.positive]
    else:
        fpr = weighted(dict(zip(c.classes, fprs)))
        fnr = weighted(dict(zip(c.classes, fnrs)))
    if len(c.classes) == 2 and c.positive is not None:
        acc = _ratio(int(c.tp[c.positive] + c.tn[c.positive]), c.total, flags, "acc")
    else:
        acc = _ratio(int(c.tp.sum()), int(total_support), flags, "acc")
    return MetricsReport(precision, recall, f1, weighted(precision), weighted(recall), weighted(f1),
                         fpr, fnr, acc, c, flags)
