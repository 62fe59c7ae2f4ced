"""Call-string dictionary, discretization, length unification and block shuffling."""
from __future__ import annotations

import hashlib
from collections import Counter
from collections.abc import Iterable
from dataclasses import dataclass, field

import numpy as np

from .dex import ApiCallSequence
from .errors import EmptyCorpusError, InvalidBlockCountError, InvalidLengthError

PAD = 0
UNK = 1
PAD_TOKEN = "<PAD>"
UNK_TOKEN = "<UNK>"
DICT_MAGIC = "MDZDICT"
DICT_VERSION = 1

_ESCAPES = {"\\": "\\\\", "\t": "\\t", "\n": "\\n", "\r": "\\r"}
_UNESCAPES = {"\\": "\\", "t": "\t", "n": "\n", "r": "\r"}


@dataclass
class ApiDictionary:
    id_to_token: list[str]
    cap: int | None = None
    token_to_id: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token) if i > UNK}

    def __len__(self):
        return len(self.id_to_token)

    def __contains__(self, token):
        return token in self.token_to_id

    def lookup(self, token: str, unk: int = UNK) -> int:
        return self.token_to_id.get(token, unk)

    def to_text(self) -> str:
        lines = [f"{DICT_MAGIC} {DICT_VERSION} {len(self)}"]
        lines += [f"{i}\t{_escape(t)}" for i, t in enumerate(self.id_to_token) if i > UNK]
        return "".join(line + "\n" for line in lines)

    @property
    def digest(self) -> bytes:
        """SHA-256 of the serialized form; binds a model to its dictionary."""
        return hashlib.sha256(self.to_text().encode("utf-8")).digest()

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "ApiDictionary":
        lines = text.split("\n")
        head = lines[0].split(" ")
        if len(head) != 3 or head[0] != DICT_MAGIC:
            raise ValueError("not a dictionary file")
        if int(head[1]) != DICT_VERSION:
            raise ValueError(f"unsupported dictionary version {head[1]}")
        size = int(head[2])
        tokens = [PAD_TOKEN, UNK_TOKEN]
        for n, line in enumerate(lines[1:], start=2):
            if not line:
                continue
            idx, _, tok = line.partition("\t")
            if int(idx) != len(tokens):
                raise ValueError(f"line {n}: expected id {len(tokens)}, got {idx}")
            tokens.append(_unescape(tok))
        if len(tokens) != size:
            raise ValueError(f"header declares {size} ids, file holds {len(tokens)}")
        return cls(tokens)

    @classmethod
    def load(cls, path) -> "ApiDictionary":
        with open(path, encoding="utf-8", newline="") as fh:
            return cls.from_text(fh.read())


def _escape(token: str) -> str:
    return "".join(_ESCAPES.get(c, c) for c in token)


def _unescape(text: str) -> str:
    out = []
    it = iter(text)
    for c in it:
        out.append(_UNESCAPES.get(next(it, ""), "") if c == "\\" else c)
    return "".join(out)


def build_dictionary(corpus: Iterable[ApiCallSequence], cap: int | None = None) -> ApiDictionary:
    """Ids 2, 3, ... by descending frequency, ties broken lexicographically."""
    counts: Counter[str] = Counter()
    n_seqs = 0
    for seq in corpus:
        counts.update(seq.calls)
        n_seqs += 1
    if n_seqs == 0:
        raise EmptyCorpusError("cannot build a dictionary from an empty corpus")
    ranked = sorted(counts, key=lambda t: (-counts[t], t))
    if cap is not None:
        ranked = ranked[:cap]
    return ApiDictionary([PAD_TOKEN, UNK_TOKEN] + ranked, cap)


@dataclass
class DiscreteSequence:
    ids: np.ndarray
    source_id: str = ""

    def __len__(self):
        return len(self.ids)


@dataclass
class UnifiedSequence:
    ids: np.ndarray
    original_length: int

    def __len__(self):
        return len(self.ids)


def discretize(seq: ApiCallSequence, dictionary: ApiDictionary, paper_compat: bool = False) -> DiscreteSequence:
    """Known calls -> their ids, unknown calls -> UNK (or 0 with ``paper_compat``)."""
    unk = PAD if paper_compat else UNK
    table = dictionary.token_to_id
    ids = np.fromiter((table.get(c, unk) for c in seq.calls), dtype=np.int64, count=len(seq.calls))
    return DiscreteSequence(ids, seq.source_id)


def unify(seq: DiscreteSequence, length: int) -> UnifiedSequence:
    """Keep the first ``length`` ids, or right-pad with PAD."""
    if length < 1:
        raise InvalidLengthError(f"sequence length must be >= 1, got {length}")
    ids = np.full(length, PAD, dtype=np.int64)
    n = min(len(seq.ids), length)
    ids[:n] = seq.ids[:n]
    return UnifiedSequence(ids, n)


def block_shuffle(seq: DiscreteSequence, n_blocks: int, seed: int) -> DiscreteSequence:
    """Cut into ``n_blocks`` near-equal contiguous blocks and permute their order."""
    n = len(seq.ids)
    if n_blocks < 1 or (n and n_blocks > n):
        raise InvalidBlockCountError(f"block count {n_blocks} invalid for sequence of length {n}")
    if n == 0 or n_blocks == 1:
        return DiscreteSequence(seq.ids.copy(), seq.source_id)
    blocks = np.array_split(seq.ids, n_blocks)
    order = np.random.default_rng(seed).permutation(n_blocks)
    return DiscreteSequence(np.concatenate([blocks[i] for i in order]), seq.source_id)
