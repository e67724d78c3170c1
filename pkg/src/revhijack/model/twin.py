"""Weight-tied twin encoder with a cosine-similarity head.

Both sides of a pair (product text, review text) go through the same encoder;
the cosine ``s`` of the two encodings is mapped to an unrelated probability
``u = sigmoid(-w * s + b)`` with trainable scalars ``w`` and ``b``.  All
gradients are written out by hand and checked against finite differences in
:func:`gradient_check`.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .. import evaluation
from ..synthgen import DatasetSplit, LabeledPair
from ..textprep import EmbeddingTable, Vocabulary, build_vocabulary, count_tokens, to_sequence
from . import _kernels as K

log = logging.getLogger(__name__)

MEAN_POOL = "mean_pool"
LSTM = "lstm"
ENCODERS = (MEAN_POOL, LSTM)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
U_CLAMP = 1e-7


@dataclass(frozen=True)
class TwinConfig:
    encoder: str = MEAN_POOL
    embedding_dim: int = 300
    hidden_sizes: tuple[int, ...] = (64, 64)
    dropout: float = 0.01
    learning_rate: float = 1e-5
    epochs: int = 13
    batch_size: int = 32
    seed: int = 0
    max_len: int = 512
    min_count: int = 2
    init_w: float = 4.0
    init_b: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.encoder not in ENCODERS:
            raise ValueError(f"encoder must be one of {ENCODERS}, got {self.encoder!r}")
        if not self.hidden_sizes:
            raise ValueError("hidden_sizes must be non-empty")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1 or self.max_len < 1:
            raise ValueError("epochs, batch_size and max_len must be positive")

    def to_json(self) -> dict:
        d = asdict(self)
        d["hidden_sizes"] = list(self.hidden_sizes)
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "TwinConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in obj.items() if k in known})


@dataclass
class TwinParameters:
    """Shared encoder weights, head scalars, and Adam state."""

    config: TwinConfig
    vocab: Vocabulary
    weights: dict[str, np.ndarray]
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    def __post_init__(self):
        for name, w in self.weights.items():
            self.m.setdefault(name, np.zeros_like(w))
            self.v.setdefault(name, np.zeros_like(w))

    def copy(self) -> "TwinParameters":
        return TwinParameters(
            self.config,
            self.vocab,
            {k: w.copy() for k, w in self.weights.items()},
            {k: w.copy() for k, w in self.m.items()},
            {k: w.copy() for k, w in self.v.items()},
            self.step,
        )


@dataclass(frozen=True)
class Prediction:
    pair_id: str
    u: float
    s: float


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    lim = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape)


def init_parameters(
    config: TwinConfig, vocab: Vocabulary, embeddings: EmbeddingTable | None = None
) -> TwinParameters:
    rng = np.random.default_rng([config.seed & 0xFFFFFFFF, 17])
    d = config.embedding_dim
    emb = rng.uniform(-0.05, 0.05, size=(len(vocab), d))
    if embeddings is not None:
        if embeddings.dim != d:
            raise ValueError(f"embedding file has dimension {embeddings.dim}, config expects {d}")
        hits = 0
        for tok, i in vocab.index.items():
            vec = embeddings.vectors.get(tok)
            if vec is not None:
                emb[i] = vec
                hits += 1
        log.info("initialized %d/%d embedding rows from word vectors", hits, len(vocab))
    emb[0] = 0.0  # unknown token: fixed zero vector, never trained
    weights: dict[str, np.ndarray] = {"embedding": emb}
    fan_in = d
    for k, h in enumerate(config.hidden_sizes):
        if config.encoder == MEAN_POOL:
            weights[f"dense{k}.W"] = _glorot(rng, fan_in, h, (h, fan_in))
            weights[f"dense{k}.b"] = np.zeros(h)
        else:
            weights[f"lstm{k}.Wx"] = _glorot(rng, fan_in, 4 * h, (fan_in, 4 * h))
            weights[f"lstm{k}.Wh"] = _glorot(rng, h, 4 * h, (h, 4 * h))
            b = np.zeros(4 * h)
            b[h:2 * h] = 1.0  # forget-gate bias
            weights[f"lstm{k}.b"] = b
        fan_in = h
    weights["head.w"] = np.array([config.init_w])
    weights["head.b"] = np.array([config.init_b])
    return TwinParameters(config, vocab, weights)


# -- encoders ---------------------------------------------------------------

def _flatten(seqs: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    lens = np.fromiter((len(s) for s in seqs), dtype=np.int64, count=len(seqs))
    offsets = np.zeros(len(seqs) + 1, dtype=np.int64)
    np.cumsum(lens, out=offsets[1:])
    ids = np.concatenate(seqs).astype(np.int64) if len(seqs) and offsets[-1] else np.zeros(0, dtype=np.int64)
    return ids, offsets


def _encode_mean_pool(params: TwinParameters, seqs, masks):
    w = params.weights
    ids, offsets = _flatten(seqs)
    x = K.pool_mean(ids, offsets, w["embedding"])
    acts, raws = [x], []
    a = x
    for k in range(len(params.config.hidden_sizes)):
        h = np.tanh(a @ w[f"dense{k}.W"].T + w[f"dense{k}.b"])
        raws.append(h)
        if masks is not None:
            h = h * masks[k]
        acts.append(h)
        a = h
    return a, {"ids": ids, "offsets": offsets, "acts": acts, "raws": raws, "masks": masks}


def _backward_mean_pool(params: TwinParameters, cache, d_out, grads):
    w = params.weights
    acts, raws, masks = cache["acts"], cache["raws"], cache["masks"]
    da = d_out
    for k in range(len(params.config.hidden_sizes) - 1, -1, -1):
        h = raws[k]
        dz = da * (1.0 - h * h)
        if masks is not None:
            dz *= masks[k]
        grads[f"dense{k}.W"] += dz.T @ acts[k]
        grads[f"dense{k}.b"] += dz.sum(axis=0)
        da = dz @ w[f"dense{k}.W"]
    K.pool_mean_backward(cache["ids"], cache["offsets"], np.ascontiguousarray(da), grads["embedding"])


def _encode_lstm(params: TwinParameters, seqs, masks):
    w = params.weights
    n_layers = len(params.config.hidden_sizes)
    top = params.config.hidden_sizes[-1]
    out = np.zeros((len(seqs), top))
    per_seq = []
    emb = w["embedding"]
    for j, ids in enumerate(seqs):
        if len(ids) == 0:
            per_seq.append(None)
            continue
        x = np.ascontiguousarray(emb[ids])
        layers = []
        for k in range(n_layers):
            hs, cs, gates = K.lstm_forward(x, w[f"lstm{k}.Wx"], w[f"lstm{k}.Wh"], w[f"lstm{k}.b"])
            layers.append((x, hs, cs, gates))
            x = hs[1:]
            if masks is not None and k < n_layers - 1:
                x = x * masks[k][j]
            x = np.ascontiguousarray(x)
        out[j] = layers[-1][1][-1]
        per_seq.append(layers)
    return out, {"seqs": seqs, "layers": per_seq, "masks": masks}


def _backward_lstm(params: TwinParameters, cache, d_out, grads):
    w = params.weights
    masks = cache["masks"]
    n_layers = len(params.config.hidden_sizes)
    for j, layers in enumerate(cache["layers"]):
        if layers is None:
            continue
        steps = layers[0][0].shape[0]
        d_h = np.zeros((steps, params.config.hidden_sizes[-1]))
        d_h[-1] = d_out[j]
        for k in range(n_layers - 1, -1, -1):
            x, hs, cs, gates = layers[k]
            d_x, d_wx, d_wh, d_b = K.lstm_backward(x, w[f"lstm{k}.Wx"], w[f"lstm{k}.Wh"], hs, cs, gates, d_h)
            grads[f"lstm{k}.Wx"] += d_wx
            grads[f"lstm{k}.Wh"] += d_wh
            grads[f"lstm{k}.b"] += d_b
            if k > 0 and masks is not None:
                d_x = d_x * masks[k - 1][j]
            d_h = np.ascontiguousarray(d_x)
        np.add.at(grads["embedding"], cache["seqs"][j], d_h)


def encode(params: TwinParameters, seqs: Sequence[np.ndarray], masks=None):
    """Encode a batch of id arrays; returns (encodings, cache for backprop)."""
    if params.config.encoder == MEAN_POOL:
        return _encode_mean_pool(params, seqs, masks)
    return _encode_lstm(params, seqs, masks)


def _backward(params, cache, d_out, grads):
    if params.config.encoder == MEAN_POOL:
        _backward_mean_pool(params, cache, d_out, grads)
    else:
        _backward_lstm(params, cache, d_out, grads)


def _ids(seq) -> np.ndarray:
    return seq.ids if hasattr(seq, "ids") else np.asarray(seq, dtype=np.int64)


def encode_mean_pool(seq, params: TwinParameters) -> np.ndarray:
    if params.config.encoder != MEAN_POOL:
        raise ValueError("parameters were built for the LSTM encoder")
    return _encode_mean_pool(params, [_ids(seq)], None)[0][0]


def encode_lstm(seq, params: TwinParameters) -> np.ndarray:
    if params.config.encoder != LSTM:
        raise ValueError("parameters were built for the mean-pool encoder")
    return _encode_lstm(params, [_ids(seq)], None)[0][0]


# -- head and loss ------------------------------------------------------------

def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def cosine_rows(a: np.ndarray, c: np.ndarray):
    """Row-wise cosine with 0 where either row is the zero vector."""
    na = np.sqrt(np.einsum("ij,ij->i", a, a))
    nc = np.sqrt(np.einsum("ij,ij->i", c, c))
    dot = np.einsum("ij,ij->i", a, c)
    ok = (na > 0) & (nc > 0)
    s = np.zeros(len(a))
    s[ok] = dot[ok] / (na[ok] * nc[ok])
    return np.clip(s, -1.0, 1.0), na, nc, ok


def head(params: TwinParameters, s: np.ndarray) -> np.ndarray:
    w = params.weights["head.w"][0]
    b = params.weights["head.b"][0]
    return _sigmoid(-w * s + b)


def bce_loss(u, y):
    u = np.clip(np.asarray(u, dtype=np.float64), U_CLAMP, 1.0 - U_CLAMP)
    y = np.asarray(y, dtype=np.float64)
    out = -(y * np.log(u) + (1.0 - y) * np.log1p(-u))
    return float(out) if out.ndim == 0 else out


def forward_pair(p_seq, r_seq, params: TwinParameters, train_mode: bool = False, rng=None, pair_id: str = "") -> Prediction:
    masks_p = masks_r = None
    if train_mode and params.config.dropout > 0:
        rng = rng if rng is not None else np.random.default_rng(params.config.seed)
        masks_p, masks_r = _draw_masks(params.config, 1, rng)
    ep, _ = encode(params, [_ids(p_seq)], masks_p)
    er, _ = encode(params, [_ids(r_seq)], masks_r)
    s, *_ = cosine_rows(ep, er)
    u = head(params, s)
    return Prediction(pair_id, float(u[0]), float(s[0]))


def _draw_masks(config: TwinConfig, batch: int, rngs) -> tuple[list, list]:
    """Inverted-dropout masks for both branches, one generator per layer."""
    keep = 1.0 - config.dropout
    layers = config.hidden_sizes if config.encoder == MEAN_POOL else config.hidden_sizes[:-1]
    if not isinstance(rngs, (list, tuple)):
        rngs = [rngs] * len(layers)
    mp, mr = [], []
    for h, rng in zip(layers, rngs):
        m = (rng.random((2, batch, h)) < keep) / keep
        mp.append(m[0])
        mr.append(m[1])
    return mp, mr


def batch_masks(config: TwinConfig, batch: int, epoch: int, index: int):
    if config.dropout <= 0:
        return None, None
    n = len(config.hidden_sizes) if config.encoder == MEAN_POOL else len(config.hidden_sizes) - 1
    rngs = [np.random.default_rng([config.seed & 0xFFFFFFFF, epoch, index, layer]) for layer in range(n)]
    if n == 0:
        return None, None
    return _draw_masks(config, batch, rngs)


def loss_and_gradients(
    params: TwinParameters,
    p_seqs: Sequence[np.ndarray],
    r_seqs: Sequence[np.ndarray],
    labels: np.ndarray,
    masks=(None, None),
    with_grads: bool = True,
):
    """Mean BCE over the batch and (optionally) its exact gradient for every weight."""
    labels = np.asarray(labels, dtype=np.float64)
    n = len(labels)
    ep, cache_p = encode(params, p_seqs, masks[0])
    er, cache_r = encode(params, r_seqs, masks[1])
    s, na, nc, ok = cosine_rows(ep, er)
    w = params.weights["head.w"][0]
    b = params.weights["head.b"][0]
    u = _sigmoid(-w * s + b)
    loss = float(np.mean(bce_loss(u, labels)))
    if not with_grads:
        return loss, None, u, s
    grads = {k: np.zeros_like(v) for k, v in params.weights.items()}
    inside = (u > U_CLAMP) & (u < 1.0 - U_CLAMP)
    dz = np.where(inside, (u - labels) / n, 0.0)
    grads["head.w"][0] = np.sum(dz * -s)
    grads["head.b"][0] = np.sum(dz)
    ds = dz * -w
    d_ep = np.zeros_like(ep)
    d_er = np.zeros_like(er)
    if ok.any():
        nap, ncr = na[ok][:, None], nc[ok][:, None]
        a, c, so, dso = ep[ok], er[ok], s[ok][:, None], ds[ok][:, None]
        d_ep[ok] = dso * (c / (nap * ncr) - so * a / (nap * nap))
        d_er[ok] = dso * (a / (nap * ncr) - so * c / (ncr * ncr))
    _backward(params, cache_p, d_ep, grads)
    _backward(params, cache_r, d_er, grads)
    grads["embedding"][0] = 0.0
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in {name}")
    return loss, grads, u, s


def compute_gradients(batch, params: TwinParameters, train_mode: bool = False, masks=(None, None)):
    """``batch`` is a sequence of (product ids, review ids, label)."""
    p = [_ids(b[0]) for b in batch]
    r = [_ids(b[1]) for b in batch]
    y = np.array([b[2] for b in batch], dtype=np.float64)
    if not train_mode:
        masks = (None, None)
    loss, grads, _, _ = loss_and_gradients(params, p, r, y, masks)
    return loss, grads


def adam_step(params: TwinParameters, grads: dict[str, np.ndarray], lr: float | None = None) -> TwinParameters:
    """Bias-corrected Adam update, in place; returns ``params``."""
    lr = params.config.learning_rate if lr is None else lr
    params.step += 1
    t = params.step
    c1 = 1.0 - ADAM_BETA1 ** t
    c2 = 1.0 - ADAM_BETA2 ** t
    for name, g in grads.items():
        m = params.m[name]
        v = params.v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * (g * g)
        if lr != 0.0:
            params.weights[name] -= lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
    return params


# -- prediction ---------------------------------------------------------------

class SequenceCache:
    """Tokenize each distinct text once."""

    def __init__(self, vocab: Vocabulary, max_len: int):
        self.vocab = vocab
        self.max_len = max_len
        self._memo: dict[str, np.ndarray] = {}

    def __call__(self, text: str) -> np.ndarray:
        ids = self._memo.get(text)
        if ids is None:
            ids = to_sequence(text, self.vocab, self.max_len).ids
            self._memo[text] = ids
        return ids


def predict_ids(params: TwinParameters, p_seqs, r_seqs, batch_size: int = 256) -> tuple[np.ndarray, np.ndarray]:
    us, ss = [], []
    for lo in range(0, len(p_seqs), batch_size):
        ep, _ = encode(params, p_seqs[lo:lo + batch_size])
        er, _ = encode(params, r_seqs[lo:lo + batch_size])
        s, *_ = cosine_rows(ep, er)
        us.append(head(params, s))
        ss.append(s)
    if not us:
        return np.zeros(0), np.zeros(0)
    return np.concatenate(us), np.concatenate(ss)


def predict_pairs(params: TwinParameters, pairs: Sequence[LabeledPair], cache: SequenceCache | None = None):
    cache = cache or SequenceCache(params.vocab, params.config.max_len)
    p = [cache(x.product_text.text) for x in pairs]
    r = [cache(x.review_text.text) for x in pairs]
    return predict_ids(params, p, r)


# -- training -----------------------------------------------------------------

@dataclass
class TrainResult:
    params: TwinParameters
    history: list[dict]
    best_epoch: int


class TrainingError(ValueError):
    pass


def vocabulary_for(pairs: Iterable[LabeledPair], min_count: int) -> Vocabulary:
    seen_products: set[str] = set()
    texts = []
    for p in pairs:
        if p.product_text.text not in seen_products:
            seen_products.add(p.product_text.text)
            texts.append(p.product_text.text)
        texts.append(p.review_text.text)
    return build_vocabulary((), min_count, counts=count_tokens(texts))


def train(
    split: DatasetSplit,
    config: TwinConfig,
    embeddings: EmbeddingTable | None = None,
    progress: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Minibatch Adam; keeps the weights from the epoch with the best validation AUC."""
    if not split.train:
        raise TrainingError("empty training set")
    vocab = vocabulary_for(split.train, config.min_count)
    params = init_parameters(config, vocab, embeddings)
    cache = SequenceCache(vocab, config.max_len)
    p_tr = [cache(x.product_text.text) for x in split.train]
    r_tr = [cache(x.review_text.text) for x in split.train]
    y_tr = np.array([x.label for x in split.train], dtype=np.float64)
    p_va = [cache(x.product_text.text) for x in split.validation]
    r_va = [cache(x.review_text.text) for x in split.validation]
    y_va = np.array([x.label for x in split.validation], dtype=np.float64)

    history = []
    best, best_key, best_epoch = None, None, 0
    n = len(y_tr)
    for epoch in range(1, config.epochs + 1):
        order = np.random.default_rng([config.seed & 0xFFFFFFFF, epoch]).permutation(n)
        total = 0.0
        for bi, lo in enumerate(range(0, n, config.batch_size)):
            idx = order[lo:lo + config.batch_size]
            masks = batch_masks(config, len(idx), epoch, bi)
            loss, grads, _, _ = loss_and_gradients(
                params, [p_tr[i] for i in idx], [r_tr[i] for i in idx], y_tr[idx], masks
            )
            adam_step(params, grads)
            total += loss * len(idx)
        row = {"epoch": epoch, "train_loss": total / n}
        if len(y_va):
            u, _ = predict_ids(params, p_va, r_va)
            row["val_loss"] = float(np.mean(bce_loss(u, y_va)))
            row["val_accuracy"] = evaluation.accuracy(u, y_va)
            try:
                row["val_auc"] = evaluation.auc(u, y_va)
            except evaluation.UndefinedAUC:
                row["val_auc"] = None
        history.append(row)
        # validation AUC first; lower loss breaks ties once AUC saturates
        loss_key = -row.get("val_loss", row["train_loss"])
        auc_key = row.get("val_auc")
        key = (auc_key if auc_key is not None else -np.inf, loss_key)
        if best_key is None or key > best_key:
            best, best_key, best_epoch = params.copy(), key, epoch
        log.info("epoch %d: %s", epoch, row)
        if progress is not None:
            progress(row)
    return TrainResult(best, history, best_epoch)


# -- gradient check -----------------------------------------------------------

def gradient_check(params: TwinParameters, sample, h: float = 1e-5, floor: float = 1e-7) -> float:
    """Max element-wise relative error between analytic and central-difference gradients.

    relative error = |a - n| / max(|a|, |n|, floor); dropout is disabled.
    """
    p = [_ids(b[0]) for b in sample]
    r = [_ids(b[1]) for b in sample]
    y = np.array([b[2] for b in sample], dtype=np.float64)
    _, grads, _, _ = loss_and_gradients(params, p, r, y)
    worst = 0.0
    for name, w in params.weights.items():
        flat = w.reshape(-1)
        g = grads[name].reshape(-1)
        # the unknown-token row is frozen, so it is not a free parameter
        start = w.shape[1] if name == "embedding" else 0
        for i in range(start, flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = loss_and_gradients(params, p, r, y, with_grads=False)[0]
            flat[i] = orig - h
            lm = loss_and_gradients(params, p, r, y, with_grads=False)[0]
            flat[i] = orig
            num = (lp - lm) / (2.0 * h)
            err = abs(g[i] - num) / max(abs(g[i]), abs(num), floor)
            worst = max(worst, err)
    return worst


def reduced_instance(encoder: str, seed: int, vocab_size: int = 12, dim: int = 6, hidden=(5, 4), n_pairs: int = 4):
    """Small random model and sample for gradient checking (double precision, no dropout)."""
    rng = np.random.default_rng(seed)
    vocab = Vocabulary(tuple(["<unk>"] + [f"t{i}" for i in range(vocab_size - 1)]), 1)
    cfg = TwinConfig(encoder=encoder, embedding_dim=dim, hidden_sizes=hidden, dropout=0.0, seed=seed)
    params = init_parameters(cfg, vocab)
    # unit-scale embeddings and small biases keep the two encodings from being
    # near-parallel, where the head saturates and gradients sink to the
    # finite-difference noise floor
    for name, w in params.weights.items():
        scale = 1.0 if name == "embedding" else 0.1 if name.endswith(".b") else 0.5
        w[...] = rng.normal(0.0, scale, size=w.shape)
    params.weights["embedding"][0] = 0.0
    params.weights["head.w"][0] = 4.0 + rng.normal()
    params.weights["head.b"][0] = rng.normal(0.0, 0.5)
    sample = []
    for k in range(n_pairs):
        lp, lr = rng.integers(1, 6, size=2)
        sample.append((rng.integers(0, vocab_size, lp), rng.integers(0, vocab_size, lr), int(k % 2)))
    return params, sample


def with_config(params: TwinParameters, **changes) -> TwinParameters:
    out = params.copy()
    out.config = replace(params.config, **changes)
    return out
