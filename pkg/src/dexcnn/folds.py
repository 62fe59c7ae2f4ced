from __future__ import annotations

from collections import defaultdict

import numpy as np

from .errors import TooFewSamplesError
from .manifest import CorpusManifest


def stratum_keys(manifest: CorpusManifest, by_family: bool = False) -> list[str]:
    if by_family:
        return [r.family or r.label for r in manifest.records]
    return [r.label for r in manifest.records]


def kfold_split(manifest: CorpusManifest, k: int, seed: int, stratify: bool = True,
                by_family: bool = False) -> list[tuple[np.ndarray, np.ndarray]]:
    """k disjoint test folds covering the corpus, each paired with its complement.

    Strata are shuffled independently, laid end to end, and dealt round-robin,
    so every stratum is spread evenly and fold sizes differ by at most one.
    """
    n = len(manifest)
    if k < 2:
        raise TooFewSamplesError(f"k must be >= 2, got {k}")
    if n < k:
        raise TooFewSamplesError(f"{n} samples cannot fill {k} folds")
    rng = np.random.default_rng(seed)
    if stratify:
        groups = defaultdict(list)
        for i, key in enumerate(stratum_keys(manifest, by_family)):
            groups[key].append(i)
        small = {key: len(v) for key, v in groups.items() if len(v) < k}
        if small:
            raise TooFewSamplesError(f"strata with fewer than {k} members: {small}")
        order = np.concatenate([rng.permutation(groups[key]) for key in sorted(groups)])
    else:
        order = rng.permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    assignment[order] = np.arange(n) % k
    everything = np.arange(n)
    return [(everything[assignment != f], everything[assignment == f]) for f in range(k)]


def stratified_holdout(labels, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Split indices into (train, holdout), holding out ``fraction`` of each label."""
    rng = np.random.default_rng(seed)
    labels = np.asarray(labels)
    train, hold = [], []
    for value in sorted(set(labels.tolist())):
        idx = rng.permutation(np.flatnonzero(labels == value))
        cut = int(round(len(idx) * fraction))
        if len(idx) > 1:
            cut = min(max(cut, 1), len(idx) - 1)
        hold.append(idx[:cut])
        train.append(idx[cut:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(hold))
