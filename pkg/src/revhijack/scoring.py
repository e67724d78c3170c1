"""Catalog-level scoring: per-review unrelated scores, per-product suspiciousness.

A product's suspiciousness is the mean unrelated score of its reviews.  Scores
come either from an internal scorer (trained twin checkpoint or the TF-IDF
baseline) or from an external CSV ``product_id,review_id,u``.
"""
from __future__ import annotations

import csv
import io
import logging
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import IO, Iterable, Protocol, Sequence

import numpy as np

from .corpus import Catalog, ParseReport, assemble_product_text, assemble_review_text
from .model.baseline import tfidf_baseline_score
from .model.twin import SequenceCache, TwinParameters, cosine_rows, encode, head
from .textprep import IdfModel

log = logging.getLogger(__name__)

N_BINS = 10
INTERNAL, EXTERNAL = "internal-model", "external"


@dataclass(frozen=True)
class ScoredReview:
    product_id: str
    review_id: str
    u: float
    source: str = INTERNAL


@dataclass(frozen=True)
class ProductScore:
    product_id: str
    n: int
    score: float
    histogram: tuple[int, ...]


class PairScorer(Protocol):
    def score_product(self, product_text: str, review_texts: Sequence[str]) -> np.ndarray: ...


class TwinScorer:
    """Scores all reviews of a product in one batch; the product side is encoded once."""

    def __init__(self, params: TwinParameters, batch_size: int = 512):
        self.params = params
        self.batch_size = batch_size
        self._seq = SequenceCache(params.vocab, params.config.max_len)

    def score_product(self, product_text, review_texts):
        tok = self._seq
        p = encode(self.params, [tok(product_text)])[0]
        out = []
        for lo in range(0, len(review_texts), self.batch_size):
            chunk = review_texts[lo:lo + self.batch_size]
            r, _ = encode(self.params, [tok(t) for t in chunk])
            s, *_ = cosine_rows(np.repeat(p, len(chunk), axis=0), r)
            out.append(head(self.params, s))
        # review texts are rarely repeated; keep the memo from growing with the catalog
        if len(self._seq._memo) > 100_000:
            self._seq._memo.clear()
        return np.concatenate(out) if out else np.zeros(0)


class BaselineScorer:
    def __init__(self, model: IdfModel):
        self.model = model

    def score_product(self, product_text, review_texts):
        return np.array([tfidf_baseline_score(product_text, t, self.model) for t in review_texts])


def _score_one(product, reviews, scorer: PairScorer) -> list[ScoredReview]:
    if not reviews:
        return []
    ptext = assemble_product_text(product).text
    u = scorer.score_product(ptext, [assemble_review_text(r).text for r in reviews])
    u = np.clip(u, 0.0, 1.0)
    return [ScoredReview(product.product_id, r.review_id, float(x), INTERNAL) for r, x in zip(reviews, u)]


def score_catalog(catalog: Catalog, scorer: PairScorer, threads: int = 1) -> list[ScoredReview]:
    """One score per original (product, review) pair, product by product.

    With ``threads > 1`` products are scored concurrently; results are merged in
    catalog order, so the output does not depend on the thread count.
    """
    reviews = catalog.reviews_by_product()
    jobs = [(p, reviews.get(p.product_id, [])) for p in catalog.products]
    if threads <= 1:
        out: list[ScoredReview] = []
        for p, rs in jobs:
            out.extend(_score_one(p, rs, scorer))
        return out
    with ThreadPoolExecutor(max_workers=threads) as ex:
        parts = list(ex.map(lambda job: _score_one(job[0], job[1], scorer), jobs))
    return [s for part in parts for s in part]


def bin_index(x: float, bins: int = N_BINS) -> int:
    """Bin of ``x`` for edges k/bins; bins are half-open except the top one, which includes 1.0."""
    k = int(x * bins)
    if k > 0 and x < k / bins:
        k -= 1
    elif k < bins - 1 and x >= (k + 1) / bins:
        k += 1
    return min(max(k, 0), bins - 1)


def histogram(values: Iterable[float], bins: int = N_BINS) -> tuple[int, ...]:
    counts = [0] * bins
    for v in values:
        counts[bin_index(v, bins)] += 1
    return tuple(counts)


def product_scores(scored: Iterable[ScoredReview]) -> list[ProductScore]:
    """Mean unrelated score and 10-bin histogram per product, in first-seen order."""
    groups: dict[str, list[float]] = defaultdict(list)
    for s in scored:
        groups[s.product_id].append(s.u)
    out = []
    for pid, us in groups.items():
        arr = np.asarray(us, dtype=np.float64)
        out.append(ProductScore(pid, len(us), float(np.mean(arr)), histogram(us)))
    return out


def flag_products(scores: Iterable[ProductScore], threshold: float = 0.5) -> list[ProductScore]:
    flagged = [s for s in scores if s.score > threshold]
    return sorted(flagged, key=lambda s: (-s.score, s.product_id))


def score_distribution(scores: Iterable[ProductScore], bins: int = N_BINS) -> tuple[int, ...]:
    return histogram((s.score for s in scores), bins)


@dataclass
class ExternalReport(ParseReport):
    unknown: list[tuple[int, str]] = field(default_factory=list)


def ingest_external_scores(
    stream: IO[str] | Iterable[str],
    known_review_ids: set[str] | None = None,
    report: ExternalReport | None = None,
) -> list[ScoredReview]:
    """Read ``product_id,review_id,u`` rows; a header row and ``#`` comments are skipped."""
    report = report if report is not None else ExternalReport()
    out = []
    reader = csv.reader(line for line in stream if line.strip() and not line.lstrip().startswith("#"))
    for lineno, row in enumerate(reader, start=1):
        if lineno == 1 and [c.strip() for c in row[:3]] == ["product_id", "review_id", "u"]:
            continue
        if len(row) < 3:
            report.skipped.append((lineno, "expected product_id,review_id,u"))
            continue
        pid, rid, raw = row[0].strip(), row[1].strip(), row[2].strip()
        try:
            u = float(raw)
        except ValueError:
            report.skipped.append((lineno, f"not a number: {raw!r}"))
            continue
        if not 0.0 <= u <= 1.0:
            report.skipped.append((lineno, f"u out of range: {raw}"))
            continue
        if known_review_ids is not None and rid not in known_review_ids:
            report.unknown.append((lineno, rid))
            log.warning("external score for unknown review %s (line %d)", rid, lineno)
        report.parsed += 1
        out.append(ScoredReview(pid, rid, u, EXTERNAL))
    if report.skipped:
        log.warning("external scores: %d lines rejected", len(report.skipped))
    return out


# -- report emission ------------------------------------------------------------

def product_scores_csv(scores: Sequence[ProductScore], header: str | None = None) -> str:
    buf = io.StringIO()
    if header:
        buf.write(f"# {header}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["product_id", "n", "score"])
    for s in scores:
        w.writerow([s.product_id, s.n, repr(s.score)])
    return buf.getvalue()


def scored_reviews_csv(scored: Sequence[ScoredReview], header: str | None = None) -> str:
    buf = io.StringIO()
    if header:
        buf.write(f"# {header}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["product_id", "review_id", "u", "source"])
    for s in scored:
        w.writerow([s.product_id, s.review_id, repr(s.u), s.source])
    return buf.getvalue()


def read_scored_reviews(stream) -> list[ScoredReview]:
    rows = csv.DictReader(line for line in stream if not line.startswith("#"))
    return [ScoredReview(r["product_id"], r["review_id"], float(r["u"]), r.get("source") or EXTERNAL) for r in rows]


def histogram_csv(counts: Sequence[int]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bin_lo", "bin_hi", "count"])
    k = len(counts)
    for i, c in enumerate(counts):
        w.writerow([f"{i / k:.1f}", f"{(i + 1) / k:.1f}", c])
    return buf.getvalue()


def histogram_svg(counts: Sequence[int], title: str, width: int = 480, height: int = 280) -> str:
    """Static bar chart of a 10-bin histogram; no external plotting dependency."""
    left, right, top, bottom = 48, 12, 32, 40
    plot_w, plot_h = width - left - right, height - top - bottom
    k = len(counts)
    peak = max(max(counts, default=0), 1)
    bar_w = plot_w / k
    esc = title.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{esc}</text>',
        f'<line x1="{left}" y1="{top + plot_h}" x2="{left + plot_w}" y2="{top + plot_h}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + plot_h}" stroke="black"/>',
        f'<text x="{left - 6}" y="{top + 4}" text-anchor="end">{peak}</text>',
        f'<text x="{left - 6}" y="{top + plot_h}" text-anchor="end">0</text>',
    ]
    for i, c in enumerate(counts):
        h = plot_h * c / peak
        x = left + i * bar_w
        parts.append(
            f'<rect x="{x + 2:.1f}" y="{top + plot_h - h:.1f}" width="{bar_w - 4:.1f}" height="{h:.1f}" fill="#4a78b5"/>'
        )
        parts.append(f'<text x="{x + bar_w / 2:.1f}" y="{top + plot_h + 14}" text-anchor="middle">{i / k:.1f}</text>')
    parts.append(
        f'<text x="{left + plot_w / 2:.1f}" y="{height - 8}" text-anchor="middle">unrelated score</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
