import os
import sys

import numpy as np
import pytest

from dexcnn import nn
from dexcnn.synth import SynthSpec, generate_synthetic_corpus, write_corpus

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")
sys.path.insert(0, FIXTURES)


def fixture_path(name):
    return os.path.join(FIXTURES, name)


def fixture_bytes(name):
    with open(fixture_path(name), "rb") as fh:
        return fh.read()


def tiny_hp(**kw):
    base = dict(seq_len=12, embed_dim=4, vocab_size=10, filters=5, kernel=3, hidden=6,
                dropout=0.0, epochs=2, lr=1e-2, batch_size=4)
    base.update(kw)
    return nn.Hyperparams(**base)


def small_hp(**kw):
    base = dict(seq_len=96, embed_dim=16, filters=32, kernel=3, hidden=32, dropout=0.2,
                epochs=8, lr=5e-3, batch_size=16)
    base.update(kw)
    return nn.Hyperparams(**base)


@pytest.fixture(scope="session")
def small_corpus():
    spec = SynthSpec(n_families=3, vocab_size=120, seq_len_range=(40, 90), samples_per_class=60,
                     noise_rate=0.05)
    return generate_synthetic_corpus(spec, seed=3)


@pytest.fixture(scope="session")
def small_corpus_dir(tmp_path_factory, small_corpus):
    out = tmp_path_factory.mktemp("corpus")
    write_corpus(small_corpus, out)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
