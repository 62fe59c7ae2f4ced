from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dexcnn.errors import TooFewSamplesError
from dexcnn.folds import kfold_split, stratified_holdout
from dexcnn.manifest import AppRecord, CorpusManifest


def manifest_of(labels):
    return CorpusManifest([AppRecord(f"{i}.apk", lab, None, None) for i, lab in enumerate(labels)])


@given(st.integers(2, 10), st.integers(10, 40), st.integers(10, 60), st.integers(0, 1000))
@settings(max_examples=60)
def test_folds_partition_and_stratify(k, n_mal, n_ben, seed):
    labels = ["malware"] * n_mal + ["benign"] * n_ben
    m = manifest_of(labels)
    folds = kfold_split(m, k, seed)
    assert len(folds) == k
    tests = np.concatenate([t for _, t in folds])
    assert sorted(tests.tolist()) == list(range(len(labels)))
    sizes = [len(t) for _, t in folds]
    assert max(sizes) - min(sizes) <= 1
    for train, test in folds:
        assert not set(train) & set(test)
        assert len(train) + len(test) == len(labels)
        mal = sum(labels[i] == "malware" for i in test)
        assert abs(mal - n_mal / k) <= 1


def test_deterministic_by_seed():
    m = manifest_of(["malware", "benign"] * 20)
    a = kfold_split(m, 5, 1)
    b = kfold_split(m, 5, 1)
    c = kfold_split(m, 5, 2)
    assert all(np.array_equal(x[1], y[1]) for x, y in zip(a, b))
    assert any(not np.array_equal(x[1], y[1]) for x, y in zip(a, c))


def test_too_few_samples():
    with pytest.raises(TooFewSamplesError):
        kfold_split(manifest_of(["malware"] * 3), 5, 0, stratify=False)
    with pytest.raises(TooFewSamplesError):
        kfold_split(manifest_of(["malware"] * 20 + ["benign"] * 2), 5, 0)
    with pytest.raises(TooFewSamplesError):
        kfold_split(manifest_of(["malware"] * 20), 1, 0)


def test_unstratified_still_partitions():
    m = manifest_of(["malware"] * 20 + ["benign"] * 2)
    folds = kfold_split(m, 5, 0, stratify=False)
    assert sorted(np.concatenate([t for _, t in folds]).tolist()) == list(range(22))


def test_holdout_fraction_per_label():
    labels = np.array([0] * 50 + [1] * 30)
    train, hold = stratified_holdout(labels, 0.2, seed=0)
    assert Counter(labels[hold].tolist()) == {0: 10, 1: 6}
    assert not set(train) & set(hold)
