import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from revhijack.corpus import Catalog
from revhijack.model.twin import TwinConfig, init_parameters, vocabulary_for
from revhijack.scoring import (
    EXTERNAL,
    ExternalReport,
    ProductScore,
    ScoredReview,
    TwinScorer,
    bin_index,
    flag_products,
    histogram,
    histogram_svg,
    ingest_external_scores,
    product_scores,
    read_scored_reviews,
    score_catalog,
    score_distribution,
    scored_reviews_csv,
)
from revhijack.synthgen import generate_inter_category


def _scored(pid, us):
    return [ScoredReview(pid, f"{pid}#{k}", u) for k, u in enumerate(us)]


def test_product_score_is_mean():
    (p,) = product_scores(_scored("A", [0.2, 0.8]))
    assert p.score == 0.5 and p.n == 2
    (q,) = product_scores(_scored("B", [0.1, 0.2, 0.9]))
    assert q.score == pytest.approx(0.4, abs=1e-15)


def test_flag_threshold_is_strict():
    scores = product_scores(_scored("A", [0.2, 0.8]) + _scored("B", [0.6, 0.6]) + _scored("C", [0.9]))
    assert [s.product_id for s in flag_products(scores)] == ["C", "B"]


def test_flag_order_breaks_ties_by_id():
    scores = [ProductScore("Z", 1, 0.7, ()), ProductScore("A", 1, 0.7, ()), ProductScore("M", 1, 0.9, ())]
    assert [s.product_id for s in flag_products(scores)] == ["M", "A", "Z"]


def test_histogram_bin_edges():
    assert histogram([0.0, 0.1, 0.0999999, 0.5, 0.9, 1.0]) == (2, 1, 0, 0, 0, 1, 0, 0, 0, 2)
    assert bin_index(0.3) == 3 and bin_index(0.7) == 7  # float edges land above the boundary


@given(st.floats(0, 1))
def test_bin_index_matches_interval(x):
    k = bin_index(x)
    assert 0 <= k <= 9
    assert k / 10 <= x or k == 0
    assert x < (k + 1) / 10 or k == 9


def test_score_distribution():
    scores = [ProductScore("A", 1, 0.95, ()), ProductScore("B", 1, 1.0, ()), ProductScore("C", 1, 0.5, ())]
    dist = score_distribution(scores)
    assert dist[9] == 2 and dist[5] == 1 and sum(dist) == 3


def test_external_ingestion():
    text = "# from another model\nproduct_id,review_id,u\nA,A#0,0.25\nA,A#1,1.5\nB,B#0,x\nB,B#9,0.75\nshort\n"
    rep = ExternalReport()
    scored = ingest_external_scores(io.StringIO(text), {"A#0", "B#0"}, rep)
    assert [(s.review_id, s.u, s.source) for s in scored] == [("A#0", 0.25, EXTERNAL), ("B#9", 0.75, EXTERNAL)]
    assert len(rep.skipped) == 3
    assert rep.unknown == [(5, "B#9")]


def test_scored_reviews_csv_round_trip():
    scored = _scored("A", [0.1, 1 / 3])
    back = read_scored_reviews(io.StringIO(scored_reviews_csv(scored, header="revhijack test")))
    assert back == scored


def test_svg_is_well_formed():
    import xml.etree.ElementTree as ET

    svg = histogram_svg((1, 0, 3, 0, 0, 0, 0, 0, 0, 5), "P<1> & co")
    root = ET.fromstring(svg)
    assert root.tag.endswith("svg")
    assert len([e for e in root if e.tag.endswith("rect")]) == 10


@pytest.fixture(scope="module")
def tiny_scorer(train_catalog):
    pairs = generate_inter_category(train_catalog, seed=0)
    cfg = TwinConfig(embedding_dim=8, hidden_sizes=(4,))
    return TwinScorer(init_parameters(cfg, vocabulary_for(pairs, 2)), batch_size=7)


def test_score_catalog_covers_every_review(deploy_catalog, tiny_scorer):
    scored = score_catalog(deploy_catalog, tiny_scorer)
    assert [s.review_id for s in scored] == [r.review_id for r in _product_order(deploy_catalog)]
    assert all(0.0 <= s.u <= 1.0 for s in scored)


def _product_order(catalog):
    by = catalog.reviews_by_product()
    return [r for p in catalog.products for r in by.get(p.product_id, [])]


def test_threads_do_not_change_scores(deploy_catalog, tiny_scorer):
    assert score_catalog(deploy_catalog, tiny_scorer, threads=4) == score_catalog(deploy_catalog, tiny_scorer)


def test_sharded_scoring_matches_whole(deploy_catalog, tiny_scorer):
    whole = product_scores(score_catalog(deploy_catalog, tiny_scorer))
    n = len(deploy_catalog.products) // 3
    parts = []
    for lo in (0, n, 2 * n):
        prods = deploy_catalog.products[lo:lo + n] if lo < 2 * n else deploy_catalog.products[lo:]
        ids = {p.product_id for p in prods}
        shard = Catalog(prods, tuple(r for r in deploy_catalog.reviews if r.product_id in ids))
        parts.extend(score_catalog(shard, tiny_scorer))
    merged = product_scores(parts)
    assert [(s.product_id, s.n) for s in merged] == [(s.product_id, s.n) for s in whole]
    np.testing.assert_allclose([s.score for s in merged], [s.score for s in whole], rtol=0, atol=1e-12)
