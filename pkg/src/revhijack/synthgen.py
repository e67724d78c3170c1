"""Synthetic related/unrelated product-review pairs built by swapping reviews.

Original product-review pairs are labelled related (0).  Unrelated pairs (1) put
a review next to a product it was never written for:

* inter-category: the new host comes from a different primary category;
* intra-category: host and donor share a category but have disjoint title
  token sets (Jaccard similarity 0 after a document-frequency stopword filter).

Randomness is drawn from per-product streams keyed on ``(seed, product_id)`` so
output does not depend on processing order or parallelism.
"""
from __future__ import annotations

import json
import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np

from ._io import dumps_line, stable_int
from .corpus import (
    Catalog,
    ProductText,
    Review,
    ReviewText,
    assemble_product_text,
    assemble_review_text,
)
from .textprep import title_token_sets

log = logging.getLogger(__name__)

RELATED, UNRELATED = 0, 1
# class balance of the full-scale Amazon inter-category set (~25k unrelated of ~59k pairs)
DEFAULT_UNRELATED_FRACTION = 25.0 / 59.0


class SwapError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledPair:
    product_text: ProductText
    review_text: ReviewText
    label: int
    strategy: str  # "inter" | "intra" | "original"
    host_product_id: str
    donor_product_id: str

    @property
    def review_id(self) -> str:
        return self.review_text.review_id

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.host_product_id, self.review_id, self.donor_product_id)

    def to_record(self) -> dict:
        return {
            "host_product_id": self.host_product_id,
            "donor_product_id": self.donor_product_id,
            "label": self.label,
            "strategy": self.strategy,
            "review_id": self.review_id,
            "product_text": self.product_text.text,
            "review_text": self.review_text.text,
        }

    @classmethod
    def from_record(cls, obj: dict) -> "LabeledPair":
        return cls(
            ProductText(obj["host_product_id"], obj["product_text"]),
            ReviewText(obj["review_id"], obj["donor_product_id"], obj["review_text"]),
            int(obj["label"]),
            obj["strategy"],
            obj["host_product_id"],
            obj["donor_product_id"],
        )


@dataclass(frozen=True)
class DatasetSplit:
    train: list[LabeledPair]
    validation: list[LabeledPair]
    test: list[LabeledPair]
    seed: int

    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.validation), len(self.test)


def product_rng(seed: int, product_id: str, *salt) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF, stable_int(product_id, *salt)]))


def _original(ptext: ProductText, review: Review) -> LabeledPair:
    return LabeledPair(ptext, assemble_review_text(review), RELATED, "original", review.product_id, review.product_id)


def generate_inter_category(
    catalog: Catalog,
    unrelated_fraction: float = DEFAULT_UNRELATED_FRACTION,
    seed: int = 0,
) -> list[LabeledPair]:
    """Every review becomes one pair: swapped to another category w.p. ``unrelated_fraction``."""
    if not 0.0 <= unrelated_fraction <= 1.0:
        raise ValueError("unrelated_fraction must lie in [0, 1]")
    by_cat: dict[str, list[int]] = defaultdict(list)
    for i, p in enumerate(catalog.products):
        if p.primary_category:
            by_cat[p.primary_category].append(i)
    if len(by_cat) < 2:
        raise SwapError("inter-category swapping impossible: fewer than two primary categories")

    # products grouped by category so "everything outside c" is two contiguous slices
    cats = sorted(by_cat)
    for c in cats:
        by_cat[c].sort(key=lambda i: catalog.products[i].product_id)
    ordered: list[int] = []
    span: dict[str, tuple[int, int]] = {}
    for c in cats:
        span[c] = (len(ordered), len(ordered) + len(by_cat[c]))
        ordered.extend(by_cat[c])

    texts = [assemble_product_text(p) for p in catalog.products]
    reviews = catalog.reviews_by_product()
    pairs: list[LabeledPair] = []
    for i, p in enumerate(catalog.products):
        cat = p.primary_category
        if not cat:
            continue
        rng = product_rng(seed, p.product_id, "inter")
        lo, hi = span[cat]
        n_other = len(ordered) - (hi - lo)
        for r in reviews.get(p.product_id, ()):
            if rng.random() < unrelated_fraction:
                k = int(rng.integers(n_other))
                host = ordered[k if k < lo else k + (hi - lo)]
                pairs.append(
                    LabeledPair(texts[host], assemble_review_text(r), UNRELATED, "inter",
                                catalog.products[host].product_id, p.product_id)
                )
            else:
                pairs.append(_original(texts[i], r))
    return pairs


def eligible_intra_pairs(
    titles: Sequence[str], max_pairs: int, rng: np.random.Generator, capacity: Sequence[int] | None = None
) -> list[tuple[int, int]]:
    """Draw up to ``max_pairs`` unordered index pairs whose filtered title sets are disjoint.

    An inverted index over title tokens gives, for each product, the set of
    products it overlaps with; partners are drawn by rejection sampling from the
    rest, so the O(n^2) pair space is never materialized.  ``capacity`` bounds how
    many pairs each product may join.
    """
    n = len(titles)
    if n < 2 or max_pairs <= 0:
        return []
    sets = title_token_sets(titles)
    postings: dict[str, list[int]] = defaultdict(list)
    for i, s in enumerate(sets):
        for t in s:
            postings[t].append(i)
    cap = list(capacity) if capacity is not None else [max_pairs] * n
    seen: set[tuple[int, int]] = set()
    out: list[tuple[int, int]] = []
    tries = 32
    progress = True
    while progress and len(out) < max_pairs:
        progress = False
        for a in rng.permutation(n):
            a = int(a)
            if len(out) >= max_pairs:
                break
            if cap[a] <= 0:
                continue
            blocked = {a}
            for t in sets[a]:
                blocked.update(postings[t])
            if len(blocked) >= n:
                continue
            for _ in range(tries):
                b = int(rng.integers(n))
                pair = (min(a, b), max(a, b))
                if b in blocked or cap[b] <= 0 or pair in seen:
                    continue
                if not sets[a] and not sets[b]:
                    # two empty titles carry no evidence of dissimilarity
                    continue
                seen.add(pair)
                out.append(pair)
                cap[a] -= 1
                cap[b] -= 1
                progress = True
                break
    return out


def generate_intra_category(
    catalog: Catalog,
    category: str,
    max_pairs: int = 1000,
    seed: int = 0,
    unrelated_per_side: int = 1,
    related_per_side: int = 1,
) -> list[LabeledPair]:
    """Swap reviews between same-category products with disjoint titles.

    For each product pair (A1, A2): ``unrelated_per_side`` reviews of A2 are
    placed under A1 and vice versa (label 1), and ``related_per_side`` original
    reviews of each are kept (label 0).  Reviews are consumed without replacement.
    """
    idx = [i for i, p in enumerate(catalog.products) if p.primary_category == category]
    if len(idx) < 2:
        raise SwapError(f"category {category!r} has fewer than two products")
    products = [catalog.products[i] for i in idx]
    reviews = catalog.reviews_by_product()
    per_side = unrelated_per_side + related_per_side
    pools = []
    for p in products:
        pool = list(reviews.get(p.product_id, ()))
        order = product_rng(seed, p.product_id, "intra-pool").permutation(len(pool))
        pools.append([pool[k] for k in order])
    capacity = [len(pool) // per_side for pool in pools]

    rng = np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF, stable_int(category, "intra")]))
    chosen = eligible_intra_pairs([p.title for p in products], max_pairs, rng, capacity)
    if not chosen:
        log.warning("category %r: no zero-overlap title pairs found", category)
        return []

    texts = [assemble_product_text(p) for p in products]
    cursor = [0] * len(products)

    def take(k: int, m: int) -> list[Review]:
        got = pools[k][cursor[k]:cursor[k] + m]
        cursor[k] += m
        return got

    pairs: list[LabeledPair] = []
    for a, b in chosen:
        ra_swap, rb_swap = take(a, unrelated_per_side), take(b, unrelated_per_side)
        ra_keep, rb_keep = take(a, related_per_side), take(b, related_per_side)
        for r in rb_swap:
            pairs.append(LabeledPair(texts[a], assemble_review_text(r), UNRELATED, "intra",
                                     products[a].product_id, products[b].product_id))
        for r in ra_swap:
            pairs.append(LabeledPair(texts[b], assemble_review_text(r), UNRELATED, "intra",
                                     products[b].product_id, products[a].product_id))
        pairs.extend(_original(texts[a], r) for r in ra_keep)
        pairs.extend(_original(texts[b], r) for r in rb_keep)
    return pairs


def generate_intra_all(catalog: Catalog, max_pairs: int = 1000, seed: int = 0, **kw) -> list[LabeledPair]:
    """Intra-category pairs for every primary category with at least two products."""
    counts: dict[str, int] = defaultdict(int)
    for p in catalog.products:
        if p.primary_category:
            counts[p.primary_category] += 1
    out: list[LabeledPair] = []
    for cat in sorted(c for c, n in counts.items() if n >= 2):
        out.extend(generate_intra_category(catalog, cat, max_pairs, seed, **kw))
    return out


def _largest_remainder(n: int, ratios: Sequence[float]) -> list[int]:
    total = float(sum(ratios))
    exact = [n * r / total for r in ratios]
    sizes = [int(e) for e in exact]
    # leftovers go to the largest fractional parts; ties favour earlier (train) slots
    order = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - sizes[i]), i))
    for i in order[: n - sum(sizes)]:
        sizes[i] += 1
    return sizes


def split_dataset(
    pairs: Sequence[LabeledPair],
    ratios: tuple[float, float, float] = (0.7, 0.1, 0.2),
    seed: int = 0,
    by_product: bool = False,
) -> DatasetSplit:
    """Seeded shuffle, then cut into train/validation/test.

    With ``by_product`` all pairs sharing a host product land in the same split,
    which prevents a product's text leaking across splits at the cost of exact
    proportions.
    """
    rng = np.random.default_rng(seed)
    pairs = list(pairs)
    if not by_product:
        order = rng.permutation(len(pairs))
        shuffled = [pairs[i] for i in order]
        n_tr, n_va, _ = _largest_remainder(len(shuffled), ratios)
        return DatasetSplit(shuffled[:n_tr], shuffled[n_tr:n_tr + n_va], shuffled[n_tr + n_va:], seed)

    groups: dict[str, list[LabeledPair]] = {}
    for p in pairs:
        groups.setdefault(p.host_product_id, []).append(p)
    keys = list(groups)
    order = rng.permutation(len(keys))
    targets = np.cumsum(_largest_remainder(len(pairs), ratios))
    parts: list[list[LabeledPair]] = [[], [], []]
    done = 0
    for k in order:
        g = groups[keys[k]]
        slot = int(np.searchsorted(targets, done, side="right"))
        parts[min(slot, 2)].extend(g)
        done += len(g)
    return DatasetSplit(parts[0], parts[1], parts[2], seed)


def write_pairs(fh: IO[str], pairs: Iterable[LabeledPair], meta: dict | None = None) -> None:
    if meta is not None:
        fh.write(dumps_line({"_meta": meta}))
    for p in pairs:
        fh.write(dumps_line(p.to_record()))


def read_pairs(fh: IO[str]) -> list[LabeledPair]:
    out = []
    for line in fh:
        if not line.strip():
            continue
        obj = json.loads(line)
        if "_meta" in obj:
            continue
        out.append(LabeledPair.from_record(obj))
    return out
