from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dexcnn.dex import ApiCallSequence
from dexcnn.errors import EmptyCorpusError, InvalidBlockCountError, InvalidLengthError
from dexcnn.sequences import (PAD, UNK, ApiDictionary, DiscreteSequence, block_shuffle, build_dictionary,
                              discretize, unify)


def seq(*calls):
    return ApiCallSequence(list(calls))


def ds(ids):
    return DiscreteSequence(np.asarray(ids, dtype=np.int64))


def test_frequency_order():
    d = build_dictionary([seq("x", "y", "x"), seq("x", "x", "y", "x")])
    assert d.token_to_id["x"] == 2 and d.token_to_id["y"] == 3


def test_ties_are_lexicographic():
    d = build_dictionary([seq("a/B;->m", "a/A;->m")])
    assert d.token_to_id["a/A;->m"] < d.token_to_id["a/B;->m"]


def test_cap_keeps_most_frequent():
    d = build_dictionary([seq("a", "a", "a", "b", "b", "c")], cap=2)
    assert len(d) == 4
    assert "c" not in d.token_to_id


def test_empty_corpus():
    with pytest.raises(EmptyCorpusError):
        build_dictionary([])


def test_discretize_examples():
    d = build_dictionary([seq("x", "x", "y")])
    assert discretize(seq("x", "y", "x"), d).ids.tolist() == [2, 3, 2]
    assert discretize(seq("z"), d).ids.tolist() == [UNK]
    assert discretize(seq("z"), d, paper_compat=True).ids.tolist() == [PAD]
    assert len(discretize(seq(), d).ids) == 0


@pytest.mark.parametrize("ids,L,expected", [
    ([2, 3, 4], 5, [2, 3, 4, 0, 0]),
    ([2, 3, 4, 5, 6, 7, 8], 5, [2, 3, 4, 5, 6]),
    ([], 3, [0, 0, 0]),
])
def test_unify_examples(ids, L, expected):
    u = unify(ds(ids), L)
    assert u.ids.tolist() == expected
    assert u.original_length == min(len(ids), L)


def test_unify_rejects_bad_length():
    with pytest.raises(InvalidLengthError):
        unify(ds([2]), 0)


def test_block_shuffle_examples():
    s = ds(np.arange(2, 30))
    assert block_shuffle(s, 1, seed=5).ids.tolist() == s.ids.tolist()
    full = block_shuffle(s, len(s.ids), seed=5).ids
    assert sorted(full.tolist()) == s.ids.tolist()
    assert full.tolist() != s.ids.tolist()
    assert block_shuffle(s, 7, seed=9).ids.tolist() == block_shuffle(s, 7, seed=9).ids.tolist()


def test_block_shuffle_keeps_blocks_contiguous():
    s = ds(np.arange(10))
    out = block_shuffle(s, 3, seed=0).ids.tolist()
    blocks = [list(range(0, 4)), list(range(4, 7)), list(range(7, 10))]
    starts = sorted(out.index(b[0]) for b in blocks)
    for b in blocks:
        i = out.index(b[0])
        assert out[i:i + len(b)] == b
    assert starts[0] == 0


@pytest.mark.parametrize("n", [0, -1, 11])
def test_block_shuffle_bad_counts(n):
    with pytest.raises(InvalidBlockCountError):
        block_shuffle(ds(np.arange(10)), n, seed=0)


_ids = st.lists(st.integers(0, 50), max_size=200)


@given(_ids, st.integers(1, 300), st.integers(0, 2**31))
@settings(max_examples=100)
def test_block_shuffle_preserves_multiset(ids, n, seed):
    if not ids:
        return
    n = min(n, len(ids))
    out = block_shuffle(ds(ids), n, seed).ids
    assert sorted(out.tolist()) == sorted(ids)


@given(_ids, st.integers(1, 100))
def test_unify_length_is_exact(ids, L):
    u = unify(ds(ids), L)
    assert len(u.ids) == L
    assert u.ids[:min(L, len(ids))].tolist() == ids[:L]
    assert not u.ids[len(ids):].any()


_token = st.text(min_size=1, max_size=10)


@given(st.lists(st.lists(_token, max_size=20), min_size=1, max_size=6), st.one_of(st.none(), st.integers(1, 30)))
@settings(max_examples=80)
def test_dictionary_text_roundtrip(corpus, cap):
    d = build_dictionary([ApiCallSequence(c) for c in corpus], cap)
    back = ApiDictionary.from_text(d.to_text())
    assert back.id_to_token == d.id_to_token
    assert back.digest == d.digest
    counts = Counter(t for c in corpus for t in c)
    ids = [d.token_to_id[t] for t in d.id_to_token[2:]]
    freqs = [counts[t] for t in d.id_to_token[2:]]
    assert ids == sorted(ids) and freqs == sorted(freqs, reverse=True)


@given(st.lists(_token, min_size=1, max_size=30))
def test_discretize_ids_in_range(tokens):
    d = build_dictionary([ApiCallSequence(tokens[: len(tokens) // 2 + 1])])
    ids = discretize(ApiCallSequence(tokens), d).ids
    assert len(ids) == len(tokens)
    assert ((ids >= 1) & (ids < len(d))).all()


def test_dictionary_file_roundtrip(tmp_path):
    d = build_dictionary([seq("pkg/A;->x\ty", "b\\n")])
    d.save(tmp_path / "d.txt")
    assert ApiDictionary.load(tmp_path / "d.txt").id_to_token == d.id_to_token
