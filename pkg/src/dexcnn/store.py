"""Binary model files.

Layout (little-endian throughout):

    b"MDZ1" | u32 format version
    | hyperparameter block (fixed field order, u32 / f64)
    | 32-byte dictionary digest
    | class-name block: u32 count, then (u32 byte length, UTF-8 bytes) each
    | tensors in fixed order, each a u64 element count followed by f64 values
"""
from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from . import nn
from .errors import (
    CorruptTensorError,
    DigestMismatchError,
    ModelBadMagicError,
    StoreIOError,
    VersionUnsupportedError,
)

MAGIC = b"MDZ1"
MAGIC_PREFIX = b"MDZ"
FORMAT_VERSION = 1
DIGEST_SIZE = 32

# (field, struct code) in file order
HP_FIELDS = (
    ("seq_len", "I"), ("embed_dim", "I"), ("vocab_size", "I"), ("filters", "I"), ("kernel", "I"),
    ("hidden", "I"), ("dropout", "d"), ("epochs", "I"), ("lr", "d"), ("batch_size", "I"),
    ("task", "I"), ("n_families", "I"), ("batchnorm", "I"), ("bn_momentum", "d"), ("threshold", "d"),
    ("paper_compat", "I"),
)
HP_FORMAT = "<" + "".join(code for _, code in HP_FIELDS)


def tensor_shapes(h: nn.Hyperparams) -> dict[str, tuple[int, ...]]:
    K, F, H, O = h.embed_dim, h.filters, h.hidden, h.n_outputs
    return {
        "embedding": (h.vocab_size, K), "conv_w": (F, h.kernel * K), "conv_b": (F,),
        "dense_w": (H, F), "dense_b": (H,), "bn_gamma": (H,), "bn_beta": (H,),
        "bn_mean": (H,), "bn_var": (H,), "out_w": (O, H), "out_b": (O,),
    }


def encode_model(p: nn.ModelParams, dict_digest: bytes, class_names=()) -> bytes:
    if len(dict_digest) != DIGEST_SIZE:
        raise ValueError("dictionary digest must be 32 bytes")
    if not p.all_finite():
        raise ValueError("refusing to save non-finite parameters")
    h = p.hp
    values = []
    for name, _ in HP_FIELDS:
        v = getattr(h, name)
        if name == "task":
            v = nn.TASKS.index(v)
        values.append(int(v) if isinstance(v, bool) else v)
    out = [MAGIC, struct.pack("<I", FORMAT_VERSION), struct.pack(HP_FORMAT, *values), bytes(dict_digest)]
    names = [n.encode("utf-8") for n in class_names]
    out.append(struct.pack("<I", len(names)))
    for n in names:
        out.append(struct.pack("<I", len(n)) + n)
    for _, arr in p.tensors():
        out.append(struct.pack("<Q", arr.size))
        out.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(out)


def save_model(p: nn.ModelParams, dict_digest: bytes, path, class_names=()) -> None:
    """Atomically write the model: temp file in the target directory, fsync, rename."""
    data = encode_model(p, dict_digest, class_names)
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(prefix=".mdz-", dir=directory)
    except OSError as exc:
        raise StoreIOError(f"cannot write model to {path}: {exc}") from exc
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise StoreIOError(f"cannot write model to {path}: {exc}") from exc


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptTensorError(f"file ends inside {what}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk


def decode_model(data: bytes) -> tuple[nn.ModelParams, bytes, list[str]]:
    if len(data) < 4 or data[:3] != MAGIC_PREFIX:
        raise ModelBadMagicError(f"not a model file: {data[:4]!r}")
    if data[:4] != MAGIC:
        raise VersionUnsupportedError(f"model magic {data[:4]!r}; only {MAGIC!r} is supported")
    cur = _Cursor(data)
    cur.take(4, "magic")
    (version,) = struct.unpack("<I", cur.take(4, "version"))
    if version != FORMAT_VERSION:
        raise VersionUnsupportedError(f"format version {version}")
    raw = struct.unpack(HP_FORMAT, cur.take(struct.calcsize(HP_FORMAT), "hyperparameters"))
    fields = {}
    for (name, _), v in zip(HP_FIELDS, raw):
        if name == "task":
            if v >= len(nn.TASKS):
                raise CorruptTensorError(f"unknown task code {v}")
            v = nn.TASKS[v]
        elif name in ("batchnorm", "paper_compat"):
            v = bool(v)
        fields[name] = v
    try:
        h = nn.Hyperparams(**fields)
    except ValueError as exc:
        raise CorruptTensorError(f"invalid hyperparameters: {exc}") from exc
    digest = cur.take(DIGEST_SIZE, "dictionary digest")
    (n_names,) = struct.unpack("<I", cur.take(4, "class names"))
    names = []
    for _ in range(n_names):
        (length,) = struct.unpack("<I", cur.take(4, "class names"))
        names.append(cur.take(length, "class names").decode("utf-8"))
    tensors = {}
    for name, shape in tensor_shapes(h).items():
        (count,) = struct.unpack("<Q", cur.take(8, f"{name} header"))
        expected = int(np.prod(shape))
        if count != expected:
            raise CorruptTensorError(f"{name}: declared {count} values, hyperparameters imply {expected}")
        tensors[name] = np.frombuffer(cur.take(8 * count, name), dtype="<f8").astype(np.float64).reshape(shape)
    if cur.pos != len(data):
        raise CorruptTensorError(f"{len(data) - cur.pos} trailing bytes after last tensor")
    return nn.ModelParams(h, **tensors), digest, names


def load_model(path) -> tuple[nn.ModelParams, bytes, list[str]]:
    """Returns ``(params, dictionary digest, class names)``; hyperparameters ride on ``params.hp``."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise StoreIOError(f"cannot read model {path}: {exc}") from exc
    return decode_model(data)


def check_digest(model_digest: bytes, dictionary) -> None:
    if dictionary.digest != model_digest:
        raise DigestMismatchError("model was trained against a different dictionary")
