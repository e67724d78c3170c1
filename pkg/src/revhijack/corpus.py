"""Product and review records: JSON-lines parsing, text assembly, catalog filtering.

Input follows the public Amazon product-metadata / review dumps: one JSON object
per line, with ``asin`` as the product key.  Lines are decoded and parsed one at a
time so arbitrarily large (optionally gzipped) files stream in bounded memory.
"""
from __future__ import annotations

import html
import json
import logging
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator

from ._io import dumps_line

log = logging.getLogger(__name__)

_TAG = re.compile(r"<[^>]+>")
_WS = re.compile(r"\s+")


@dataclass(frozen=True)
class Product:
    product_id: str
    title: str = ""
    description: str = ""
    brand: str = ""
    features: tuple[str, ...] = ()
    categories: tuple[str, ...] = ()

    @property
    def primary_category(self) -> str:
        return self.categories[0] if self.categories else ""


@dataclass(frozen=True)
class Review:
    review_id: str
    product_id: str
    body: str = ""
    summary: str = ""
    style: tuple[tuple[str, str], ...] = ()
    rating: float | None = None
    verified: bool | None = None


@dataclass(frozen=True)
class ProductText:
    product_id: str
    text: str


@dataclass(frozen=True)
class ReviewText:
    review_id: str
    product_id: str
    text: str


@dataclass
class ParseReport:
    """Counts and positions of lines that did not become records."""

    parsed: int = 0
    skipped: list[tuple[int, str]] = field(default_factory=list)
    duplicates: list[tuple[int, str]] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "parsed": self.parsed,
            "skipped": len(self.skipped),
            "duplicates": len(self.duplicates),
            "skipped_lines": [ln for ln, _ in self.skipped[:20]],
        }


def strip_markup(s: str) -> str:
    # iterate to a fixed point so stripping is idempotent (escaped tags, double escapes)
    while True:
        new = html.unescape(_TAG.sub(" ", s))
        if new == s:
            return s
        s = new


def normalize_ws(s: str) -> str:
    return _WS.sub(" ", s).strip()


def _as_text(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (list, tuple)):
        return " ".join(_as_text(v) for v in value if v is not None).strip()
    return str(value)


def _as_list(value) -> tuple[str, ...]:
    if value is None:
        return ()
    if isinstance(value, str):
        return (value,) if value else ()
    out = []
    for v in value:
        if isinstance(v, (list, tuple)):
            # legacy "categories": [[top, sub, ...], ...] uses the first path
            if not out:
                out.extend(str(x) for x in v)
            continue
        out.append(str(v))
    return tuple(out)


def _iter_json_lines(stream: IO[bytes] | Iterable, report: ParseReport) -> Iterator[tuple[int, dict]]:
    for lineno, raw in enumerate(stream, start=1):
        if isinstance(raw, bytes):
            try:
                raw = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                report.skipped.append((lineno, f"utf-8: {exc.reason}"))
                continue
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            report.skipped.append((lineno, f"json: {exc.msg}"))
            continue
        if not isinstance(obj, dict):
            report.skipped.append((lineno, "not an object"))
            continue
        if "_meta" in obj:
            continue
        yield lineno, obj


def iter_products(stream, report: ParseReport | None = None) -> Iterator[Product]:
    report = report if report is not None else ParseReport()
    seen: set[str] = set()
    for lineno, obj in _iter_json_lines(stream, report):
        pid = obj.get("asin", obj.get("product_id"))
        if pid is None or str(pid) == "":
            report.skipped.append((lineno, "missing asin"))
            continue
        pid = str(pid)
        if pid in seen:
            report.duplicates.append((lineno, pid))
            log.info("duplicate product %s at line %d ignored", pid, lineno)
            continue
        seen.add(pid)
        report.parsed += 1
        yield Product(
            product_id=pid,
            title=strip_markup(_as_text(obj.get("title"))),
            description=strip_markup(_as_text(obj.get("description"))),
            brand=strip_markup(_as_text(obj.get("brand"))),
            features=tuple(strip_markup(f) for f in _as_list(obj.get("feature", obj.get("features")))),
            categories=_as_list(obj.get("category", obj.get("categories"))),
        )


def parse_products(stream, report: ParseReport | None = None) -> list[Product]:
    report = report if report is not None else ParseReport()
    products = list(iter_products(stream, report))
    if report.skipped or report.duplicates:
        log.warning("products: %s", report.summary())
    return products


def _style_pairs(value) -> tuple[tuple[str, str], ...]:
    if not value:
        return ()
    if isinstance(value, dict):
        items = value.items()
    else:
        items = value
    return tuple(sorted((str(k).strip(), _as_text(v).strip()) for k, v in items))


def iter_reviews(stream, report: ParseReport | None = None) -> Iterator[Review]:
    report = report if report is not None else ParseReport()
    ordinals: Counter[str] = Counter()
    seen: set[str] = set()
    for lineno, obj in _iter_json_lines(stream, report):
        pid = obj.get("asin", obj.get("product_id"))
        if pid is None or str(pid) == "":
            report.skipped.append((lineno, "missing asin"))
            continue
        pid = str(pid)
        rid = obj.get("review_id")
        if rid is None:
            rid = f"{pid}#{ordinals[pid]}"
        ordinals[pid] += 1
        rid = str(rid)
        if rid in seen:
            report.duplicates.append((lineno, rid))
            continue
        seen.add(rid)
        rating = obj.get("overall", obj.get("rating"))
        verified = obj.get("verified")
        report.parsed += 1
        yield Review(
            review_id=rid,
            product_id=pid,
            body=strip_markup(_as_text(obj.get("reviewText", obj.get("body")))),
            summary=strip_markup(_as_text(obj.get("summary"))),
            style=_style_pairs(obj.get("style")),
            rating=float(rating) if rating is not None else None,
            verified=bool(verified) if verified is not None else None,
        )


def parse_reviews(stream, report: ParseReport | None = None) -> list[Review]:
    report = report if report is not None else ParseReport()
    reviews = list(iter_reviews(stream, report))
    if report.skipped or report.duplicates:
        log.warning("reviews: %s", report.summary())
    return reviews


def product_record(p: Product) -> dict:
    return {
        "asin": p.product_id,
        "title": p.title,
        "brand": p.brand,
        "feature": list(p.features),
        "description": p.description,
        "category": list(p.categories),
    }


def review_record(r: Review) -> dict:
    return {
        "review_id": r.review_id,
        "asin": r.product_id,
        "summary": r.summary,
        "reviewText": r.body,
        "style": dict(r.style),
        "overall": r.rating,
        "verified": r.verified,
    }


def write_products(fh: IO[str], products: Iterable[Product]) -> None:
    for p in products:
        fh.write(dumps_line(product_record(p)))


def write_reviews(fh: IO[str], reviews: Iterable[Review]) -> None:
    for r in reviews:
        fh.write(dumps_line(review_record(r)))


def _join(parts: Iterable[str]) -> str:
    return " ".join(s for s in (normalize_ws(p) for p in parts) if s)


def assemble_product_text(p: Product) -> ProductText:
    """Product side of a pair: title, brand, features, description."""
    return ProductText(p.product_id, _join([p.title, p.brand, *p.features, p.description]))


def assemble_review_text(r: Review) -> ReviewText:
    """Review side of a pair: summary, style values (key order), body."""
    values = [v for _, v in sorted(r.style)]
    return ReviewText(r.review_id, r.product_id, _join([r.summary, *values, r.body]))


@dataclass(frozen=True)
class Catalog:
    """Products with their joined reviews, both in input order."""

    products: tuple[Product, ...]
    reviews: tuple[Review, ...]

    @classmethod
    def join(cls, products: Iterable[Product], reviews: Iterable[Review]) -> tuple["Catalog", int]:
        """Drop reviews whose product is unknown; returns the catalog and the drop count."""
        products = tuple(products)
        known = {p.product_id for p in products}
        kept, dropped = [], 0
        for r in reviews:
            if r.product_id in known:
                kept.append(r)
            else:
                dropped += 1
        return cls(products, tuple(kept)), dropped

    def reviews_by_product(self) -> dict[str, list[Review]]:
        out: dict[str, list[Review]] = defaultdict(list)
        for r in self.reviews:
            out[r.product_id].append(r)
        return out

    def product(self, product_id: str) -> Product:
        for p in self.products:
            if p.product_id == product_id:
                return p
        raise KeyError(product_id)


def filter_min_reviews(catalog: Catalog, min_reviews: int = 5) -> tuple[Catalog, dict]:
    counts = Counter(r.product_id for r in catalog.reviews)
    keep = {p.product_id for p in catalog.products if counts[p.product_id] >= min_reviews}
    products = tuple(p for p in catalog.products if p.product_id in keep)
    reviews = tuple(r for r in catalog.reviews if r.product_id in keep)
    stats = {
        "min_reviews": min_reviews,
        "products_in": len(catalog.products),
        "products_out": len(products),
        "reviews_in": len(catalog.reviews),
        "reviews_out": len(reviews),
    }
    log.info("filter_min_reviews: %s", stats)
    return Catalog(products, reviews), stats


def load_catalog(products_path, reviews_path) -> tuple[Catalog, dict]:
    from ._io import open_binary

    prep, rrep = ParseReport(), ParseReport()
    with open_binary(products_path) as fh:
        products = parse_products(fh, prep)
    with open_binary(reviews_path) as fh:
        reviews = parse_reviews(fh, rrep)
    catalog, orphans = Catalog.join(products, reviews)
    return catalog, {"products": prep.summary(), "reviews": rrep.summary(), "orphan_reviews": orphans}
