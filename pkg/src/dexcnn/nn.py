"""Embedding + 1-D convolution classifier over discretized call sequences.

Layers: embedding lookup -> conv (valid, ReLU) -> global max pool over
positions -> dense -> batch norm -> ReLU -> dropout -> output.  Detection uses
one logistic unit, attribution a softmax over families.

The convolution is evaluated through per-token projection tables: for window
offset ``j`` the table ``E @ W_j^T`` holds each token's contribution, and a
position's pre-activation is the sum of three table rows.  This is exactly
the valid convolution, but a window's value depends only on the ids in it,
never on where it sits in the sequence.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    BadLabelError,
    DimensionMismatchError,
    EmptyCorpusError,
    LabelOutOfRangeError,
    StaleTraceError,
)
from .optim import Adam
from .sequences import PAD, UnifiedSequence

log = logging.getLogger(__name__)

DETECTION = "detection"
ATTRIBUTION = "attribution"
TASKS = (DETECTION, ATTRIBUTION)

PROB_CLAMP = 1e-12
BN_EPS = 1e-5

# vocabulary caps for the model-size presets, largest first
PRESET_VOCAB = {1: 100_000, 2: 70_000, 3: 50_000, 4: 20_000}


@dataclass(frozen=True)
class Hyperparams:
    seq_len: int = 512
    embed_dim: int = 64
    vocab_size: int = 2
    filters: int = 512
    kernel: int = 3
    hidden: int = 256
    dropout: float = 0.5
    epochs: int = 10
    lr: float = 1e-3
    batch_size: int = 32
    task: str = DETECTION
    n_families: int = 0
    batchnorm: bool = True
    bn_momentum: float = 0.9
    threshold: float = 0.5
    paper_compat: bool = False       # unknown calls share id 0 with padding

    def __post_init__(self):
        for name in ("seq_len", "embed_dim", "vocab_size", "filters", "kernel", "hidden", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.kernel > self.seq_len:
            raise ValueError("kernel wider than the sequence")

    @property
    def n_outputs(self) -> int:
        return 1 if self.task == DETECTION else self.n_families

    @property
    def n_classes(self) -> int:
        return 2 if self.task == DETECTION else self.n_families

    def with_(self, **changes) -> "Hyperparams":
        return replace(self, **changes)


TRAINABLE = ("embedding", "conv_w", "conv_b", "dense_w", "dense_b", "bn_gamma", "bn_beta", "out_w", "out_b")
TENSORS = TRAINABLE[:7] + ("bn_mean", "bn_var") + TRAINABLE[7:]


@dataclass
class ModelParams:
    hp: Hyperparams
    embedding: np.ndarray   # (A, K)
    conv_w: np.ndarray      # (filters, kernel*K); column j*K + k is window offset j, embedding dim k
    conv_b: np.ndarray      # (filters,)
    dense_w: np.ndarray     # (hidden, filters)
    dense_b: np.ndarray
    bn_gamma: np.ndarray
    bn_beta: np.ndarray
    bn_mean: np.ndarray
    bn_var: np.ndarray
    out_w: np.ndarray       # (n_outputs, hidden)
    out_b: np.ndarray

    def trainable(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in TRAINABLE}

    def tensors(self) -> list[tuple[str, np.ndarray]]:
        return [(name, getattr(self, name)) for name in TENSORS]

    def copy(self) -> "ModelParams":
        return ModelParams(self.hp, **{name: arr.copy() for name, arr in self.tensors()})

    def all_finite(self) -> bool:
        return all(np.isfinite(arr).all() for _, arr in self.tensors())

    def n_parameters(self) -> int:
        return sum(getattr(self, name).size for name in TRAINABLE)


def init_params(h: Hyperparams, seed: int) -> ModelParams:
    """Seeded init: embedding U(-0.05, 0.05), conv/dense/output LeCun-uniform, zero biases."""
    if h.task == ATTRIBUTION and h.n_families < 2:
        raise ValueError("attribution needs at least 2 families")
    rng = np.random.default_rng(seed)
    K, F, H = h.embed_dim, h.filters, h.hidden

    def lecun(shape, fan_in):
        limit = np.sqrt(3.0 / fan_in)
        return rng.uniform(-limit, limit, size=shape)

    embedding = rng.uniform(-0.05, 0.05, size=(h.vocab_size, K))
    embedding[PAD] = 0.0
    return ModelParams(
        h,
        embedding=embedding,
        conv_w=lecun((F, h.kernel * K), h.kernel * K),
        conv_b=np.zeros(F),
        dense_w=lecun((H, F), F),
        dense_b=np.zeros(H),
        bn_gamma=np.ones(H),
        bn_beta=np.zeros(H),
        bn_mean=np.zeros(H),
        bn_var=np.ones(H),
        out_w=lecun((h.n_outputs, H), H),
        out_b=np.zeros(h.n_outputs),
    )


@dataclass
class ForwardTrace:
    train: bool
    x: np.ndarray                   # (B, L) ids
    uniq: np.ndarray                # distinct ids in x
    inv: np.ndarray                 # (B, L) positions of x in uniq
    conv: np.ndarray                # (B, L-kernel+1, filters) ReLU activations
    argmax: np.ndarray              # (B, filters) pooled position, first on ties
    pooled: np.ndarray              # (B, filters)
    dense: np.ndarray               # (B, hidden) pre-normalization
    norm: np.ndarray | None         # (B, hidden) normalized, before scale/shift
    inv_std: np.ndarray | None
    batch_mean: np.ndarray | None
    batch_var: np.ndarray | None
    act: np.ndarray                 # (B, hidden) post-ReLU
    mask: np.ndarray | None         # dropout mask incl. 1/(1-rate) scaling
    hidden_out: np.ndarray          # (B, hidden) fed to the output layer
    logits: np.ndarray              # (B, n_outputs)
    probs: np.ndarray               # detection: (B,) malware score; attribution: (B, F)
    params: ModelParams = field(repr=False)


def _as_batch(p: ModelParams, x) -> np.ndarray:
    if isinstance(x, UnifiedSequence):
        x = x.ids[None, :]
    elif isinstance(x, (list, tuple)) and x and isinstance(x[0], UnifiedSequence):
        x = np.stack([s.ids for s in x])
    x = np.asarray(x, dtype=np.int64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != p.hp.seq_len:
        raise DimensionMismatchError(f"expected sequences of length {p.hp.seq_len}, got shape {x.shape}")
    if x.size and (x.min() < 0 or x.max() >= p.hp.vocab_size):
        raise DimensionMismatchError(f"ids must lie in [0, {p.hp.vocab_size})")
    return x


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax(z):
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def forward(p: ModelParams, x, train: bool = False, seed: int | None = None) -> ForwardTrace:
    """Run the network on one sequence or a batch.

    In train mode batch norm uses batch statistics and dropout draws its mask
    from ``seed``; in inference mode dropout is the identity and batch norm
    uses the running statistics.
    """
    h = p.hp
    x = _as_batch(p, x)
    B, L = x.shape
    K, J = h.embed_dim, h.kernel
    out_len = L - J + 1

    uniq, inv = np.unique(x, return_inverse=True)
    inv = inv.reshape(B, L)
    emb = p.embedding[uniq]
    z = None
    for j in range(J):
        table = emb @ p.conv_w[:, j * K:(j + 1) * K].T          # (U, F)
        part = table[inv[:, j:j + out_len]]
        z = part if z is None else np.add(z, part, out=z)
    z += p.conv_b
    conv = np.maximum(z, 0.0, out=z)
    argmax = conv.argmax(axis=1)
    pooled = np.take_along_axis(conv, argmax[:, None, :], axis=1)[:, 0, :]

    dense = pooled @ p.dense_w.T + p.dense_b
    norm = inv_std = bmean = bvar = None
    if h.batchnorm:
        if train:
            bmean = dense.mean(axis=0)
            bvar = dense.var(axis=0)
            inv_std = 1.0 / np.sqrt(bvar + BN_EPS)
            norm = (dense - bmean) * inv_std
        else:
            inv_std = 1.0 / np.sqrt(p.bn_var + BN_EPS)
            norm = (dense - p.bn_mean) * inv_std
        pre = norm * p.bn_gamma + p.bn_beta
    else:
        pre = dense
    act = np.maximum(pre, 0.0)

    mask = None
    hidden_out = act
    if train and h.dropout > 0.0:
        rng = np.random.default_rng(seed)
        mask = (rng.random(act.shape) >= h.dropout) / (1.0 - h.dropout)
        hidden_out = act * mask

    logits = hidden_out @ p.out_w.T + p.out_b
    probs = _sigmoid(logits[:, 0]) if h.task == DETECTION else _softmax(logits)
    return ForwardTrace(train, x, uniq, inv, conv, argmax, pooled, dense, norm, inv_std, bmean, bvar,
                        act, mask, hidden_out, logits, probs, p)


def _labels(h: Hyperparams, label, batch: int) -> np.ndarray:
    y = np.atleast_1d(np.asarray(label))
    if y.shape != (batch,) or not np.issubdtype(y.dtype, np.integer):
        raise BadLabelError(f"expected {batch} integer labels, got {label!r}")
    if y.min() < 0 or y.max() >= h.n_classes:
        raise BadLabelError(f"labels must lie in [0, {h.n_classes})")
    return y.astype(np.int64)


def _label_probs(trace: ForwardTrace, y: np.ndarray) -> np.ndarray:
    if trace.params.hp.task == DETECTION:
        s = trace.probs
        return np.where(y == 1, s, 1.0 - s)
    return trace.probs[np.arange(len(y)), y]


def compute_loss(trace: ForwardTrace, label) -> float:
    """Mean cross-entropy over the batch, probabilities clamped to [1e-12, 1-1e-12]."""
    y = _labels(trace.params.hp, label, len(trace.x))
    p = np.clip(_label_probs(trace, y), PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-np.log(p).mean())


def backward(trace: ForwardTrace, label) -> dict[str, np.ndarray]:
    """Exact gradients of :func:`compute_loss` with respect to every trainable tensor."""
    if not trace.train:
        raise StaleTraceError("backward needs a trace produced in train mode")
    p = trace.params
    h = p.hp
    B = len(trace.x)
    y = _labels(h, label, B)

    # d loss / d logits; zero where the probability was clamped
    py = _label_probs(trace, y)
    live = ((py > PROB_CLAMP) & (py < 1.0 - PROB_CLAMP)).astype(float)[:, None]
    if h.task == DETECTION:
        dlogits = (trace.probs - y)[:, None]
    else:
        dlogits = trace.probs.copy()
        dlogits[np.arange(B), y] -= 1.0
    dlogits *= live / B

    g = {}
    g["out_w"] = dlogits.T @ trace.hidden_out
    g["out_b"] = dlogits.sum(axis=0)
    dact = dlogits @ p.out_w
    if trace.mask is not None:
        dact = dact * trace.mask
    dpre = dact * (trace.act > 0)

    if h.batchnorm:
        g["bn_gamma"] = (dpre * trace.norm).sum(axis=0)
        g["bn_beta"] = dpre.sum(axis=0)
        dnorm = dpre * p.bn_gamma
        ddense = trace.inv_std / B * (B * dnorm - dnorm.sum(axis=0) - trace.norm * (dnorm * trace.norm).sum(axis=0))
    else:
        g["bn_gamma"] = np.zeros_like(p.bn_gamma)
        g["bn_beta"] = np.zeros_like(p.bn_beta)
        ddense = dpre

    g["dense_w"] = ddense.T @ trace.pooled
    g["dense_b"] = ddense.sum(axis=0)
    dpooled = ddense @ p.dense_w
    dz = dpooled * (trace.pooled > 0)                      # (B, F)
    g["conv_b"] = dz.sum(axis=0)

    K, J, F = h.embed_dim, h.kernel, h.filters
    U = len(trace.uniq)
    emb = p.embedding[trace.uniq]
    filt = np.broadcast_to(np.arange(F), (B, F))
    conv_w = np.empty_like(p.conv_w)
    demb = np.zeros((U, K))
    for j in range(J):
        tok = np.take_along_axis(trace.inv, trace.argmax + j, axis=1)    # (B, F) token slot per filter
        dtable = np.bincount((tok * F + filt).ravel(), weights=dz.ravel(), minlength=U * F).reshape(U, F)
        wj = p.conv_w[:, j * K:(j + 1) * K]
        conv_w[:, j * K:(j + 1) * K] = dtable.T @ emb
        demb += dtable @ wj
    g["conv_w"] = conv_w
    dembedding = np.zeros_like(p.embedding)
    dembedding[trace.uniq] = demb
    dembedding[PAD] = 0.0
    g["embedding"] = dembedding
    return {name: g[name] for name in TRAINABLE}


@dataclass
class Prediction:
    task: str
    score: float | None = None          # detection: malware probability
    is_malware: bool | None = None
    probs: np.ndarray | None = None     # attribution: per-family probabilities
    family: int | None = None

    @property
    def label(self) -> int:
        return int(self.is_malware) if self.task == DETECTION else int(self.family)


def predict_batch(p: ModelParams, x, batch_size: int = 64) -> list[Prediction]:
    x = _as_batch(p, x)
    out = []
    for start in range(0, len(x), batch_size):
        trace = forward(p, x[start:start + batch_size], train=False)
        for i in range(len(trace.x)):
            if p.hp.task == DETECTION:
                s = float(trace.probs[i])
                out.append(Prediction(DETECTION, score=s, is_malware=s >= p.hp.threshold))
            else:
                probs = trace.probs[i].copy()
                out.append(Prediction(ATTRIBUTION, probs=probs, family=int(np.argmax(probs))))
    return out


def predict(p: ModelParams, x) -> Prediction:
    """Inference on a single sequence."""
    x = _as_batch(p, x)
    if len(x) != 1:
        raise DimensionMismatchError("predict takes one sequence; use predict_batch")
    return predict_batch(p, x)[0]


@dataclass
class TrainResult:
    params: ModelParams
    epoch_losses: list[float]


def train(corpus, h: Hyperparams, seed: int, params: ModelParams | None = None) -> TrainResult:
    """Mini-batch Adam over ``corpus`` = [(UnifiedSequence or id array, label), ...]."""
    if not corpus:
        raise EmptyCorpusError("training corpus is empty")
    X = np.stack([s.ids if isinstance(s, UnifiedSequence) else np.asarray(s) for s, _ in corpus])
    y = np.array([int(lbl) for _, lbl in corpus], dtype=np.int64)
    if y.min() < 0 or y.max() >= h.n_classes:
        raise LabelOutOfRangeError(f"labels must lie in [0, {h.n_classes}) for task {h.task}")
    rng = np.random.default_rng(seed)
    p = params.copy() if params is not None else init_params(h, int(rng.integers(2**63)))
    p.hp = h
    _as_batch(p, X[:1])
    opt = Adam(lr=h.lr)
    weights = p.trainable()
    losses = []
    # fresh stats: cumulative average until it would fall below the momentum
    bn_updates = 0 if params is None else None
    for epoch in range(h.epochs):
        order = rng.permutation(len(X))
        total = 0.0
        for start in range(0, len(X), h.batch_size):
            idx = order[start:start + h.batch_size]
            trace = forward(p, X[idx], train=True, seed=int(rng.integers(2**63)))
            total += compute_loss(trace, y[idx]) * len(idx)
            grads = backward(trace, y[idx])
            opt.step(weights, grads)
            if h.batchnorm:
                m = h.bn_momentum
                if bn_updates is not None:
                    m = min(m, bn_updates / (bn_updates + 1.0))
                    bn_updates += 1
                p.bn_mean *= m
                p.bn_mean += (1.0 - m) * trace.batch_mean
                p.bn_var *= m
                p.bn_var += (1.0 - m) * trace.batch_var
        losses.append(total / len(X))
        if not p.all_finite():
            raise FloatingPointError(f"non-finite parameters after epoch {epoch + 1}")
        log.debug("epoch %d loss %.6f", epoch + 1, losses[-1])
    return TrainResult(p, losses)
