import gzip
import io
import json

from revhijack._io import open_binary
from revhijack.corpus import (
    Catalog,
    ParseReport,
    Product,
    Review,
    assemble_product_text,
    assemble_review_text,
    filter_min_reviews,
    parse_products,
    parse_reviews,
    strip_markup,
    write_products,
    write_reviews,
)


def _lines(*objs):
    return io.BytesIO("".join(json.dumps(o) + "\n" for o in objs).encode())


def test_product_fields_and_markup():
    [p] = parse_products(_lines({
        "asin": "B1", "title": "Basketball", "brand": "Acme",
        "feature": ["rubber", "29.5 inch"], "description": ["<b>ball</b>"],
        "category": ["Sports", "Balls"],
    }))
    assert p.product_id == "B1"
    assert p.features == ("rubber", "29.5 inch")
    assert p.description.strip() == "ball"
    assert p.primary_category == "Sports"
    assert assemble_product_text(p).text == "Basketball Acme rubber 29.5 inch ball"


def test_review_text_uses_style_values_in_key_order():
    [r] = parse_reviews(_lines({
        "asin": "B1", "summary": "Solid ball", "reviewText": "Great bounce",
        "style": {"Size:": "7", "Color:": "Red"}, "overall": 5.0,
    }))
    assert r.style == (("Color:", "Red"), ("Size:", "7"))
    assert assemble_review_text(r).text == "Solid ball Red 7 Great bounce"


def test_malformed_lines_are_reported_not_fatal():
    data = io.BytesIO(b'{"asin": "A"}\nnot json\n[1,2]\n\n{"title": "no id"}\n{"asin": "A"}\n{"asin": "B"}\n')
    rep = ParseReport()
    products = parse_products(data, rep)
    assert [p.product_id for p in products] == ["A", "B"]
    assert [ln for ln, _ in rep.skipped] == [2, 3, 5]
    assert rep.duplicates == [(6, "A")]
    assert rep.parsed == 2


def test_review_ids_are_per_product_ordinals():
    reviews = parse_reviews(_lines({"asin": "A"}, {"asin": "B"}, {"asin": "A"}, {"asin": "A", "review_id": "x"}))
    assert [r.review_id for r in reviews] == ["A#0", "B#0", "A#1", "x"]


def test_meta_header_line_is_skipped():
    reviews = parse_reviews(_lines({"_meta": {"tool": "x"}}, {"asin": "A"}))
    assert len(reviews) == 1


def test_strip_markup_is_idempotent():
    s = "&lt;p&gt;a &amp;amp; b&lt;/p&gt; <i>c</i>"
    once = strip_markup(s)
    assert "<" not in once
    assert strip_markup(once) == once


def test_write_parse_round_trip():
    products = [Product("P1", "T", "d", "B", ("f1", "f2"), ("Cat",))]
    reviews = [Review("P1#0", "P1", "body", "sum", (("Color", "Red"),), 4.0, True)]
    buf_p, buf_r = io.StringIO(), io.StringIO()
    write_products(buf_p, products)
    write_reviews(buf_r, reviews)
    assert parse_products(io.StringIO(buf_p.getvalue())) == products
    assert parse_reviews(io.StringIO(buf_r.getvalue())) == reviews


def test_filter_min_reviews_boundary():
    products = [Product("A"), Product("B")]
    reviews = [Review(f"A#{i}", "A") for i in range(5)] + [Review(f"B#{i}", "B") for i in range(4)]
    cat, stats = filter_min_reviews(Catalog(tuple(products), tuple(reviews)), 5)
    assert [p.product_id for p in cat.products] == ["A"]
    assert len(cat.reviews) == 5
    assert stats["products_out"] == 1 and stats["reviews_in"] == 9


def test_join_drops_orphans():
    cat, dropped = Catalog.join([Product("A")], [Review("A#0", "A"), Review("Z#0", "Z")])
    assert dropped == 1 and len(cat.reviews) == 1


def test_gzip_is_detected_by_magic(tmp_path):
    path = tmp_path / "p.jsonl"  # no .gz suffix on purpose
    with gzip.open(path, "wb") as fh:
        fh.write(b'{"asin": "A", "title": "x"}\n')
    with open_binary(path) as fh:
        assert parse_products(fh)[0].title == "x"


def test_bundled_fixture_shape(train_catalog, deploy_catalog):
    for cat in (train_catalog, deploy_catalog):
        assert len(cat.products) == 200
        assert len(cat.reviews) >= 2000
        assert {p.primary_category for p in cat.products} == {"Sports", "Electronics", "Kitchen", "Beauty"}
    assert not {p.product_id for p in train_catalog.products} & {p.product_id for p in deploy_catalog.products}
