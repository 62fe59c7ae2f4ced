"""Glue between raw apps, the dictionary and the network."""
from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import nn
from .apk import dex_from_path
from .dex import ApiCallSequence, extract_call_sequence, parse_dex
from .errors import DexCnnError, EmptyCorpusError, LabelOutOfRangeError
from .manifest import CorpusManifest
from .sequences import ApiDictionary, build_dictionary, discretize, unify

log = logging.getLogger(__name__)

DETECTION_CLASSES = ("benign", "malware")


def app_sequence(path: str, prefixes=None) -> ApiCallSequence:
    """APK or bare dex -> merged call sequence."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        data = dex_from_path(path)
    return extract_call_sequence(parse_dex(data), source_id=path, prefixes=prefixes)


def load_sequences(manifest: CorpusManifest, threads: int = 1, prefixes=None):
    """Extract every app in the manifest; failures come back as exceptions in place."""
    def one(rec):
        try:
            return app_sequence(manifest.resolve(rec), prefixes)
        except (DexCnnError, OSError) as exc:
            return exc

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(one, manifest.records))
    return [one(r) for r in manifest.records]


def task_labels(manifest: CorpusManifest, task: str, families: list[str] | None = None):
    """(indices, labels, class names) usable for ``task``.

    Attribution keeps only malware records that carry a family.
    """
    if task == nn.DETECTION:
        idx = np.arange(len(manifest))
        y = np.array([int(r.is_malware) for r in manifest.records], dtype=np.int64)
        return idx, y, list(DETECTION_CLASSES)
    families = families or manifest.families()
    lookup = {f: i for i, f in enumerate(families)}
    idx = np.array([i for i, r in enumerate(manifest.records) if r.is_malware and r.family in lookup],
                   dtype=np.int64)
    y = np.array([lookup[manifest.records[i].family] for i in idx], dtype=np.int64)
    return idx, y, list(families)


def encode(seqs, dictionary: ApiDictionary, length: int, paper_compat: bool = False) -> np.ndarray:
    """Discretize and unify a batch of call sequences into an (n, length) id matrix."""
    out = np.zeros((len(seqs), length), dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i] = unify(discretize(s, dictionary, paper_compat), length).ids
    return out


@dataclass
class Classifier:
    params: nn.ModelParams
    dictionary: ApiDictionary
    class_names: list[str]

    @property
    def hp(self) -> nn.Hyperparams:
        return self.params.hp

    def encode(self, seqs) -> np.ndarray:
        return encode(seqs, self.dictionary, self.hp.seq_len, self.hp.paper_compat)

    def predict(self, seqs) -> list[nn.Prediction]:
        if not len(seqs):
            return []
        return nn.predict_batch(self.params, self.encode(seqs))

    def predict_ids(self, ids: np.ndarray) -> list[nn.Prediction]:
        return nn.predict_batch(self.params, ids)


def fit_classifier(seqs, labels, class_names, h: nn.Hyperparams, seed: int,
                   cap: int | None = None) -> tuple[Classifier, list[float]]:
    """Dictionary from the training sequences only, then train."""
    if not len(seqs):
        raise EmptyCorpusError("no training sequences")
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = len(class_names)
    if labels.min() < 0 or labels.max() >= n_classes:
        raise LabelOutOfRangeError("label outside class list")
    dictionary = build_dictionary(seqs, cap)
    h = h.with_(vocab_size=len(dictionary),
                n_families=n_classes if h.task == nn.ATTRIBUTION else 0)
    X = encode(seqs, dictionary, h.seq_len, h.paper_compat)
    result = nn.train(list(zip(X, labels)), h, seed)
    return Classifier(result.params, dictionary, list(class_names)), result.epoch_losses
