"""Deterministic synthetic mini-catalog with planted hijacked listings.

Layout of the generated corpus:

* 4 primary categories, 50 products each (200 products).
* Each category owns a vocabulary no other category uses: 12 everyday nouns
  plus a pool of 300 invented product words.  A small generic vocabulary
  ("great", "works", "the", ...) and the brand names are shared by all.
* Every product draws 6 signature words from its category pool.  The title is
  three signature words plus one category noun; description and features mix
  signature words, category nouns and generic filler.
* Each review mentions its own product's signature words (about 30% of tokens),
  category nouns (25%) and generic words (45%).
* Planted hijacks: ``n_planted`` products keep their own listing text but every
  review was written for a phantom product from a different category.

Two disjoint product sets are drawn from the same vocabularies: a clean
``train`` catalog used for swapping and training, and a held-out ``deploy``
catalog (190 clean + 10 planted) that is only ever scored.

Run ``python -m revhijack.fixture OUT_DIR`` to write ``train/`` and ``deploy/``
sub-directories, each with ``products.jsonl``, ``reviews.jsonl`` and
``plants.json``.
"""
from __future__ import annotations

import argparse
import gzip
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._io import atomic_write, dumps_line

CATEGORIES = {
    "Sports": ["ball", "racket", "court", "jersey", "helmet", "glove", "net", "goal", "bat", "pitch", "sneaker", "whistle"],
    "Electronics": ["cable", "charger", "battery", "screen", "adapter", "port", "speaker", "headset", "router", "remote", "monitor", "plug"],
    "Kitchen": ["pan", "skillet", "knife", "spatula", "blender", "kettle", "ladle", "oven", "whisk", "bowl", "grater", "toaster"],
    "Beauty": ["serum", "lotion", "mascara", "lipstick", "cleanser", "toner", "brush", "palette", "balm", "shampoo", "perfume", "moisturizer"],
}
GENERIC = (
    "great good works love nice the a and it is this for with very product quality price "
    "bought arrived fast shipping recommend would again happy five stars fine ok really "
    "received well as described item my was so used use daily gift"
).split()
SENTIMENT = ["great", "love it", "works well", "five stars", "good value", "nice", "happy", "recommended"]
COLORS = ["Red", "Blue", "Black", "White", "Green"]
SIZES = ["Small", "Medium", "Large"]
SYLLABLES = ["ka", "lo", "mi", "ra", "ven", "tor", "qu", "zel", "dri", "fon", "sa", "pim", "olu", "ber",
             "nax", "tiv", "gra", "hol", "yun", "esk", "wim", "cra", "dus", "plo"]


@dataclass
class Fixture:
    products: list[dict]
    reviews: list[dict]
    planted: list[str]
    meta: dict = field(default_factory=dict)


def _pseudo_words(rng: np.random.Generator, n: int, taken: set[str]) -> list[str]:
    out = []
    while len(out) < n:
        w = "".join(rng.choice(SYLLABLES, size=int(rng.integers(2, 4))))
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


def _pick(rng, seq, k=None):
    if k is None:
        return seq[int(rng.integers(len(seq)))]
    return [seq[int(i)] for i in rng.choice(len(seq), size=k, replace=False)]


def _review(rng, signature, nouns, idx, pid, review_id=None):
    summary = _pick(rng, SENTIMENT)
    if rng.random() < 0.5:
        summary += " " + _pick(rng, signature)
    body = []
    for _ in range(int(rng.integers(12, 31))):
        r = rng.random()
        if r < 0.30:
            body.append(_pick(rng, signature))
        elif r < 0.55:
            body.append(_pick(rng, nouns))
        else:
            body.append(_pick(rng, GENERIC))
    style = {"Color": _pick(rng, COLORS)} if rng.random() < 0.5 else {"Size": _pick(rng, SIZES)}
    rec = {
        "review_id": review_id or f"{pid}#{idx}",
        "asin": pid,
        "summary": summary.capitalize(),
        "reviewText": " ".join(body).capitalize() + ".",
        "style": style,
        "overall": float(rng.integers(3, 6)),
        "verified": bool(rng.random() < 0.8),
    }
    return rec


PARTS = {"train": 0, "deploy": 1}


def make_fixture(seed: int = 7, part: str = "train", per_category: int = 50, n_planted: int | None = None,
                 reviews_range: tuple[int, int] = (40, 81), pool_size: int = 300) -> Fixture:
    if n_planted is None:
        n_planted = 10 if part == "deploy" else 0
    vocab_rng = np.random.default_rng(seed)
    taken = {w for nouns in CATEGORIES.values() for w in nouns} | set(GENERIC)
    pools = {c: _pseudo_words(vocab_rng, pool_size, taken) for c in CATEGORIES}
    brands = [w.capitalize() for w in _pseudo_words(vocab_rng, 40, taken)]
    cats = list(CATEGORIES)
    tag = PARTS[part]
    rng = np.random.default_rng([seed, tag])

    products, signatures = [], {}
    for ci, cat in enumerate(cats):
        nouns = CATEGORIES[cat]
        for k in range(per_category):
            pid = f"{cat[:2].upper()}{tag}{k:03d}"
            sig = _pick(rng, pools[cat], 6)
            signatures[pid] = (cat, sig)
            title = " ".join(w.capitalize() for w in sig[:3]) + " " + _pick(rng, nouns).capitalize()
            desc = sig[3:] + _pick(rng, nouns, 3) + _pick(rng, GENERIC, 4)
            rng.shuffle(desc)
            products.append({
                "asin": pid,
                "title": title,
                "brand": _pick(rng, brands),
                "feature": [f"{_pick(rng, nouns)} {sig[3]}", f"{_pick(rng, GENERIC)} {sig[4]} {sig[5]}"],
                "description": ["<p>" + " ".join(desc) + "</p>"],
                "category": [cat],
            })

    order = rng.permutation(len(products))
    planted = sorted(products[int(i)]["asin"] for i in order[:n_planted])
    reviews = []
    for p in products:
        pid = p["asin"]
        cat, sig = signatures[pid]
        if pid in planted:
            # reviews written for some other-category product
            other = _pick(rng, [c for c in cats if c != cat])
            src_sig, src_nouns = _pick(rng, pools[other], 6), CATEGORIES[other]
        else:
            src_sig, src_nouns = sig, CATEGORIES[cat]
        for j in range(int(rng.integers(*reviews_range))):
            reviews.append(_review(rng, src_sig, src_nouns, j, pid))
    meta = {"seed": seed, "part": part, "per_category": per_category, "n_planted": n_planted, "categories": cats}
    return Fixture(products, reviews, planted, meta)


def write_fixture(out_dir, seed: int = 7, **kw) -> dict[str, Fixture]:
    """Write both parts under ``out_dir/train`` and ``out_dir/deploy``."""
    return {part: write_part(Path(out_dir) / part, seed, part=part, **kw) for part in PARTS}


def _write_lines(path: Path, records, compress: bool) -> None:
    if not compress:
        with atomic_write(path) as fh:
            for rec in records:
                fh.write(dumps_line(rec))
        return
    with atomic_write(path.with_name(path.name + ".gz"), "wb") as raw:
        with gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0) as gz:
            for rec in records:
                gz.write(dumps_line(rec).encode("utf-8"))


def write_part(out_dir, seed: int = 7, compress: bool = False, **kw) -> Fixture:
    fx = make_fixture(seed, **kw)
    out = Path(out_dir)
    _write_lines(out / "products.jsonl", fx.products, compress)
    _write_lines(out / "reviews.jsonl", fx.reviews, compress)
    with atomic_write(out / "plants.json") as fh:
        json.dump({"planted": fx.planted, **fx.meta}, fh, indent=1)
        fh.write("\n")
    return fx


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description="write the synthetic mini-catalog fixture")
    ap.add_argument("out_dir")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--gzip", action="store_true", help="write .jsonl.gz files")
    args = ap.parse_args(argv)
    for part, fx in write_fixture(args.out_dir, args.seed, compress=args.gzip).items():
        print(f"{part}: {len(fx.products)} products, {len(fx.reviews)} reviews, {len(fx.planted)} planted")


if __name__ == "__main__":
    main()
