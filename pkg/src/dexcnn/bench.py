"""Per-app runtime measurement of preprocessing and prediction."""
from __future__ import annotations

import os
import time
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .apk import extract_dex, open_apk
from .dex import extract_call_sequence, parse_dex
from .errors import DexCnnError
from .manifest import CorpusManifest
from .nn import predict
from .pipeline import Classifier
from .sequences import discretize, unify


@dataclass
class BenchRow:
    path: str
    apk_size: int | None = None
    dex_size: int | None = None
    preprocess_ms: float | None = None
    predict_ms: float | None = None
    error: str | None = None


@dataclass
class BenchReport:
    rows: list[BenchRow]
    corr_dex: float | None
    corr_apk: float | None
    predict_mean_ms: float | None
    predict_std_ms: float | None

    def to_dict(self) -> dict:
        return {"rows": [asdict(r) for r in self.rows], "corr_preprocess_dex": self.corr_dex,
                "corr_preprocess_apk": self.corr_apk, "predict_mean_ms": self.predict_mean_ms,
                "predict_std_ms": self.predict_std_ms}


def _pearson(a, b) -> float | None:
    a, b = np.asarray(a, float), np.asarray(b, float)
    if len(a) < 2 or a.std() == 0 or b.std() == 0:
        return None
    return float(np.corrcoef(a, b)[0, 1])


def benchmark_runtime(manifest: CorpusManifest, clf: Classifier, repeats: int = 1) -> BenchReport:
    """Time (extract + discretize + unify) and predict for every app, single-threaded.

    With ``repeats`` > 1 the minimum over repeats is kept, which damps
    scheduler noise.  Apps that fail to ingest get an error row and the batch
    carries on.
    """
    rows = []
    L = clf.hp.seq_len
    for rec in manifest.records:
        path = manifest.resolve(rec)
        row = BenchRow(path)
        rows.append(row)
        try:
            row.apk_size = os.path.getsize(path)
            best_pre = best_pred = float("inf")
            for _ in range(repeats):
                t0 = time.perf_counter()
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    data = extract_dex(open_apk(path))
                seq = extract_call_sequence(parse_dex(data), source_id=path)
                x = unify(discretize(seq, clf.dictionary, clf.hp.paper_compat), L)
                t1 = time.perf_counter()
                predict(clf.params, x)
                t2 = time.perf_counter()
                best_pre = min(best_pre, t1 - t0)
                best_pred = min(best_pred, t2 - t1)
            row.dex_size = len(data)
            row.preprocess_ms = best_pre * 1e3
            row.predict_ms = best_pred * 1e3
        except (DexCnnError, OSError) as exc:
            row.error = f"{type(exc).__name__}: {exc}"
    ok = [r for r in rows if r.error is None]
    pre = [r.preprocess_ms for r in ok]
    pred = np.array([r.predict_ms for r in ok])
    return BenchReport(
        rows,
        _pearson(pre, [r.dex_size for r in ok]),
        _pearson(pre, [r.apk_size for r in ok]),
        float(pred.mean()) if len(pred) else None,
        float(pred.std()) if len(pred) else None,
    )
