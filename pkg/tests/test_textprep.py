import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from revhijack.textprep import (
    EmbeddingFormatError,
    build_vocabulary,
    cosine_sparse,
    jaccard_similarity,
    load_embeddings,
    tfidf_fit,
    tfidf_transform,
    title_token_sets,
    to_sequence,
    tokenize,
)


def test_tokenize_folds_case_accents_and_punctuation():
    assert tokenize("Crème BRÛLÉE, 29.5-inch_ball!") == ["creme", "brulee", "29", "5", "inch", "ball"]
    assert tokenize("") == []


def test_vocabulary_order_and_unknown():
    vocab = build_vocabulary(["a b a", "b a c"], min_count=2)
    assert vocab.index == {"<unk>": 0, "a": 1, "b": 2}
    assert vocab["c"] == 0 and vocab["zzz"] == 0


def test_vocabulary_ties_break_alphabetically():
    vocab = build_vocabulary(["y x z", "z x y"], min_count=1)
    assert vocab.tokens == ("<unk>", "x", "y", "z")


def test_sequence_truncates_to_max_len():
    vocab = build_vocabulary(["w"], min_count=1)
    seq = to_sequence(" ".join(["w"] * 600), vocab)
    assert len(seq) == 512 and seq.truncated
    short = to_sequence("w w", vocab)
    assert len(short) == 2 and not short.truncated


@given(st.lists(st.sampled_from(["a", "b", "c", "d", "x1"]), max_size=900), st.integers(1, 600))
def test_sequence_never_exceeds_max_len(words, max_len):
    vocab = build_vocabulary(["a b c"], min_count=1)
    seq = to_sequence(" ".join(words), vocab, max_len=max_len)
    assert len(seq) == min(len(words), max_len)
    assert seq.ids.min(initial=0) >= 0


def test_idf_smoothing():
    model = tfidf_fit(["a b", "a c", "a"])
    idf = dict(zip(model.tokens, model.idf))
    assert idf["a"] == pytest.approx(1.0)
    assert idf["b"] == pytest.approx(math.log(4 / 2) + 1)
    model2 = tfidf_fit(["a b", "a"])
    assert dict(zip(model2.tokens, model2.idf))["b"] == pytest.approx(math.log(1.5) + 1, abs=1e-12)


def test_tfidf_vectors_are_unit_norm():
    model = tfidf_fit(["red ball", "blue ball", "red cable"])
    v = tfidf_transform("red red ball unseen", model)
    assert math.isclose(math.sqrt(sum(w * w for w in v.values())), 1.0)
    assert tfidf_transform("unseen words only", model) == {}


def test_cosine_sparse_hand_case():
    assert cosine_sparse({0: 3.0, 1: 4.0}, {0: 1.0}) == pytest.approx(0.6)
    assert cosine_sparse({}, {0: 1.0}) == 0.0


def test_jaccard_examples():
    a = set(tokenize("Apple iPhone 12 Black"))
    b = set(tokenize("Apple iPhone Case"))
    assert jaccard_similarity(a, b) == pytest.approx(2 / 5)
    assert jaccard_similarity({"hose"}, {"cable"}) == 0.0
    assert jaccard_similarity(set(), set()) == 0.0
    assert jaccard_similarity({"a", "b", "c", "d"}, {"a"}) == 0.25


def test_title_stopwords_need_frequency_and_count():
    titles = ["pro hose", "pro cable", "pro lamp", "pro mug", "blue kit", "red kit", "green pan", "gray pot"]
    sets = title_token_sets(titles)
    assert all("pro" not in s for s in sets)  # 4/8 titles
    assert {"kit"} <= sets[4]  # only 2 titles, kept
    assert title_token_sets(["pro a", "pro b"]) == [frozenset({"pro", "a"}), frozenset({"pro", "b"})]


@given(st.lists(st.sets(st.sampled_from("abcdef")), min_size=2, max_size=2))
def test_jaccard_is_symmetric_and_bounded(sets):
    a, b = sets
    j = jaccard_similarity(a, b)
    assert j == jaccard_similarity(b, a)
    assert 0.0 <= j <= 1.0
    assert (j == 0.0) == (not (a & b))


def test_embedding_loader():
    table = load_embeddings(io.StringIO("the 0.1 0.2 0.3\nball 1 2 3\n\n"))
    assert table.dim == 3 and len(table) == 2
    np.testing.assert_array_equal(table.lookup("ball"), [1.0, 2.0, 3.0])
    np.testing.assert_array_equal(table.lookup("nope"), np.zeros(3))


def test_embedding_errors_name_the_line():
    with pytest.raises(EmbeddingFormatError, match="line 2"):
        load_embeddings(io.StringIO("a 1 2\nb 1 2 3\n"))
    with pytest.raises(EmbeddingFormatError, match="line 1"):
        load_embeddings(io.StringIO("a 1 x\n"))
    with pytest.raises(EmbeddingFormatError, match="expected 4"):
        load_embeddings(io.StringIO("a 1 2\n"), dim=4)
