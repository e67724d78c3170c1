"""Tokenization, vocabularies, TF-IDF, title-set Jaccard, and word-vector tables."""
from __future__ import annotations

import json
import math
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np

_TOKEN = re.compile(r"[^\W_]+")

UNK = "<unk>"
DEFAULT_MAX_LEN = 512


def tokenize(text: str) -> list[str]:
    """Lowercased, ASCII-folded runs of letters/digits; everything else separates."""
    if not text:
        return []
    folded = unicodedata.normalize("NFKD", text)
    folded = "".join(ch for ch in folded if not unicodedata.combining(ch))
    return _TOKEN.findall(folded.lower())


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]  # index = id; tokens[0] is UNK
    min_count: int = 2
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "index", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    def __getitem__(self, token: str) -> int:
        return self.index.get(token, 0)

    def to_json(self) -> dict:
        return {"min_count": self.min_count, "tokens": list(self.tokens)}

    @classmethod
    def from_json(cls, obj: dict) -> "Vocabulary":
        return cls(tuple(obj["tokens"]), obj.get("min_count", 2))


def count_tokens(texts: Iterable[str]) -> Counter:
    counts: Counter = Counter()
    for t in texts:
        counts.update(tokenize(t))
    return counts


def build_vocabulary(texts: Iterable[str], min_count: int = 2, counts: Counter | None = None) -> Vocabulary:
    """Ids ordered by (frequency desc, token asc); id 0 is the unknown token.

    ``counts`` lets callers merge partial Counters built elsewhere; the merge is
    commutative so the ids do not depend on how the corpus was sharded.
    """
    if counts is None:
        counts = count_tokens(texts)
    kept = sorted((t for t, c in counts.items() if c >= min_count and t != UNK), key=lambda t: (-counts[t], t))
    return Vocabulary((UNK, *kept), min_count)


@dataclass(frozen=True)
class TokenSequence:
    key: str
    ids: np.ndarray
    truncated: bool = False

    def __len__(self) -> int:
        return len(self.ids)


def to_sequence(text: str, vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN, key: str = "") -> TokenSequence:
    toks = tokenize(text)
    truncated = len(toks) > max_len
    ids = np.fromiter((vocab[t] for t in toks[:max_len]), dtype=np.int64, count=min(len(toks), max_len))
    return TokenSequence(key, ids, truncated)


# -- TF-IDF ---------------------------------------------------------------

@dataclass(frozen=True)
class IdfModel:
    tokens: tuple[str, ...]
    idf: np.ndarray
    n_docs: int
    df: np.ndarray
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "index", {t: i for i, t in enumerate(self.tokens)})

    def to_json(self) -> dict:
        return {
            "n_docs": self.n_docs,
            "df": {t: int(d) for t, d in zip(self.tokens, self.df)},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "IdfModel":
        items = sorted(obj["df"].items())
        return _idf_from_df(dict(items), int(obj["n_docs"]))


def _idf_from_df(df: dict[str, int], n_docs: int) -> IdfModel:
    tokens = tuple(sorted(df))
    dfa = np.array([df[t] for t in tokens], dtype=np.int64)
    idf = np.log((1.0 + n_docs) / (1.0 + dfa)) + 1.0
    return IdfModel(tokens, idf, n_docs, dfa)


def document_frequencies(texts: Iterable[str]) -> tuple[Counter, int]:
    df: Counter = Counter()
    n = 0
    for t in texts:
        df.update(set(tokenize(t)))
        n += 1
    return df, n


def tfidf_fit(texts: Iterable[str]) -> IdfModel:
    """Smoothed idf: ln((1 + N) / (1 + df)) + 1."""
    df, n = document_frequencies(texts)
    return _idf_from_df(dict(df), n)


def tfidf_transform(text: str, model: IdfModel) -> dict[int, float]:
    """Sparse L2-normalized tf*idf vector keyed by model token id; unseen tokens are dropped."""
    counts = Counter(tokenize(text))
    vec = {}
    for tok, c in counts.items():
        i = model.index.get(tok)
        if i is not None:
            vec[i] = c * float(model.idf[i])
    norm = math.sqrt(sum(w * w for w in vec.values()))
    if norm == 0.0:
        return {}
    return {i: w / norm for i, w in vec.items()}


def cosine_sparse(u: dict, v: dict) -> float:
    if not u or not v:
        return 0.0
    if len(u) > len(v):
        u, v = v, u
    dot = sum(w * v.get(k, 0.0) for k, w in u.items())
    nu = math.sqrt(sum(w * w for w in u.values()))
    nv = math.sqrt(sum(w * w for w in v.values()))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return max(-1.0, min(1.0, dot / (nu * nv)))


# -- title sets -------------------------------------------------------------

def jaccard_similarity(a: set | frozenset, b: set | frozenset) -> float:
    if not a and not b:
        return 0.0
    inter = len(a & b)
    return inter / (len(a) + len(b) - inter)


def title_token_sets(
    titles: Sequence[str], max_df: float = 0.25, min_stop_df: int = 3
) -> list[frozenset[str]]:
    """Title token sets with high-document-frequency tokens removed.

    A token is dropped when it occurs in more than ``max_df`` of the titles and in
    at least ``min_stop_df`` of them; the count floor keeps tiny groups (where any
    shared word is "frequent") from losing every token.
    """
    sets = [frozenset(tokenize(t)) for t in titles]
    df: Counter = Counter()
    for s in sets:
        df.update(s)
    n = len(sets)
    stop = {t for t, d in df.items() if d > max_df * n and d >= min_stop_df}
    if not stop:
        return sets
    return [s - stop for s in sets]


# -- word vectors -----------------------------------------------------------

class EmbeddingFormatError(ValueError):
    pass


@dataclass
class EmbeddingTable:
    dim: int
    vectors: dict[str, np.ndarray]

    @property
    def unknown(self) -> np.ndarray:
        return np.zeros(self.dim)

    def lookup(self, token: str) -> np.ndarray:
        v = self.vectors.get(token)
        return self.unknown if v is None else v

    def __len__(self) -> int:
        return len(self.vectors)


def load_embeddings(stream: IO[str] | Iterable[str], dim: int | None = None) -> EmbeddingTable:
    """Parse "token v1 ... vd" lines (GloVe text format)."""
    vectors: dict[str, np.ndarray] = {}
    for lineno, line in enumerate(stream, start=1):
        if isinstance(line, bytes):
            line = line.decode("utf-8")
        parts = line.rstrip("\n").rstrip().split(" ")
        if len(parts) < 2:
            if not line.strip():
                continue
            raise EmbeddingFormatError(f"line {lineno}: no vector values")
        values = parts[1:]
        if dim is None:
            dim = len(values)
        if len(values) != dim:
            raise EmbeddingFormatError(f"line {lineno}: expected {dim} values, found {len(values)}")
        try:
            vec = np.array([float(x) for x in values], dtype=np.float64)
        except ValueError as exc:
            raise EmbeddingFormatError(f"line {lineno}: {exc}") from None
        vectors.setdefault(parts[0], vec)
    return EmbeddingTable(dim if dim is not None else 0, vectors)


def save_json(path, obj) -> None:
    from ._io import atomic_write

    with atomic_write(path) as fh:
        json.dump(obj, fh, sort_keys=True, ensure_ascii=False, indent=1)
        fh.write("\n")
