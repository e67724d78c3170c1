"""Acceptance gate: one test per criterion, each printing a single PASS/FAIL line.

The fixture-pipeline tests train in a child process with BLAS thread pools
pinned to one, so the reported runtime is single-threaded.
"""
import json
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from revhijack import cli
from revhijack.evaluation import auc, roc_curve, trapezoid_area
from revhijack.model import load_checkpoint
from revhijack.model.twin import LSTM, MEAN_POOL, gradient_check, reduced_instance
from revhijack.scoring import ProductScore, ScoredReview, TwinScorer, flag_products, product_scores, score_catalog
from revhijack.synthgen import generate_inter_category, split_dataset
from revhijack.textprep import build_vocabulary, to_sequence

from conftest import FIXTURES, ROOT

pytestmark = pytest.mark.slow

SINGLE_THREAD = {k: "1" for k in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS")}


def verdict(capsys, name: str, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, detail


@pytest.fixture(scope="session")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance")
    env = {**os.environ, **SINGLE_THREAD}
    results = {}
    for strategy in ("inter", "intra"):
        proc = subprocess.run(
            [sys.executable, str(ROOT / "tests" / "_pipeline.py"), strategy, str(out)],
            env=env, capture_output=True, text=True, check=True,
        )
        results[strategy] = json.loads(proc.stdout.strip().splitlines()[-1])
    results["dir"] = out
    return results


def test_fixture_pipeline_inter(capsys, trained):
    r = trained["inter"]
    ok = r["accuracy"] >= 0.90 and r["auc"] >= 0.95 and r["seconds"] <= 120
    verdict(capsys, "fixture inter-category", ok,
            f"accuracy {r['accuracy']:.4f} (>=0.90), AUC {r['auc']:.5f} (>=0.95), {r['seconds']:.1f}s (<=120)")


def test_fixture_pipeline_intra(capsys, trained):
    r = trained["intra"]
    ok = r["auc"] >= 0.80 and r["seconds"] <= 120
    verdict(capsys, "fixture intra-category", ok, f"AUC {r['auc']:.5f} (>=0.80), {r['seconds']:.1f}s (<=120)")


@pytest.mark.parametrize("encoder", [MEAN_POOL, LSTM])
def test_gradient_oracle(capsys, encoder):
    errors = []
    for seed in range(5):
        params, sample = reduced_instance(encoder, seed)
        errors.append(gradient_check(params, sample, h=1e-5))
    worst = max(errors)
    verdict(capsys, f"gradient oracle ({encoder})", worst < 1e-4,
            f"max relative error {worst:.2e} over {len(errors)} instances (<1e-4)")


def _brute_auc(s, y):
    pos, neg = s[y == 1], s[y == 0]
    diff = pos[:, None] - neg[None, :]
    return float(((diff > 0).sum() + 0.5 * (diff == 0).sum()) / (len(pos) * len(neg)))


def test_auc_oracle(capsys):
    rng = np.random.default_rng(20240101)
    worst_brute = worst_trap = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 501))
        s = rng.random(n)
        k = int(rng.integers(1, n + 1))
        s[:k] = np.round(s[:k] * rng.integers(1, 6)) / 5  # ties
        y = rng.integers(0, 2, n)
        y[0], y[1] = 0, 1
        a = auc(s, y)
        worst_brute = max(worst_brute, abs(a - _brute_auc(s, y)))
        worst_trap = max(worst_trap, abs(a - trapezoid_area(roc_curve(s, y))))
    ok = worst_brute <= 1e-12 and worst_trap <= 1e-12
    verdict(capsys, "AUC oracle", ok,
            f"max |auc - brute| {worst_brute:.1e}, max |auc - trapezoid| {worst_trap:.1e} (<=1e-12, 100 instances)")


def test_scoring_semantics(capsys):
    (p,) = product_scores([ScoredReview("A", "A#0", 0.2), ScoredReview("A", "A#1", 0.8)])
    flagged = flag_products([p, ProductScore("B", 1, 0.5000001, ())])
    ok = p.score == 0.5 and [f.product_id for f in flagged] == ["B"]
    verdict(capsys, "scoring semantics", ok, f"mean([0.2, 0.8]) = {p.score}; score 0.5 flagged: {'A' in flagged}")


def test_planted_recovery(capsys, trained, deploy_catalog):
    params = load_checkpoint(trained["dir"] / "inter.rhc")
    planted = set(json.loads((FIXTURES / "deploy" / "plants.json").read_text())["planted"])
    scores = product_scores(score_catalog(deploy_catalog, TwinScorer(params)))
    high = {s.product_id for s in scores if s.score > 0.5}
    hit, false = len(high & planted), len(high - planted)
    n_clean = len(scores) - len(planted)
    ok = len(planted) == 10 and n_clean == 190 and hit >= 9 and false <= 1
    verdict(capsys, "planted-hijack recovery", ok, f"{hit}/10 planted above 0.5 (>=9), {false}/{n_clean} clean (<=1)")


def _cli_run(out: Path) -> None:
    cfg = str(FIXTURES / "run_config.json")
    for argv in (["ingest"], ["generate"], ["train", "--deterministic"],
                 ["score", "--catalog", str(FIXTURES / "deploy")]):
        code = cli.main(["--config", cfg, "--seed", "42", "--out", str(out), *argv])
        assert code == 0, argv


def test_determinism(capsys, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    _cli_run(a)
    _cli_run(b)
    files = sorted(
        str(p.relative_to(a)) for sub in ("dataset", "model", "score") for p in (a / sub).iterdir()
    )
    differ = [f for f in files if (a / f).read_bytes() != (b / f).read_bytes()]
    required = {"dataset/train.jsonl", "dataset/test.jsonl", "model/metrics.json", "score/products.csv"}
    ok = not differ and required <= set(files)
    verdict(capsys, "determinism", ok, f"{len(files) - len(differ)}/{len(files)} artifacts byte-identical"
            + (f"; differing: {differ}" if differ else ""))


def test_truncation_and_split(capsys, train_catalog):
    from revhijack.corpus import assemble_product_text, assemble_review_text

    texts = [assemble_product_text(p).text for p in train_catalog.products]
    texts += [assemble_review_text(r).text for r in train_catalog.reviews]
    texts.append(" ".join(["ball"] * 5000))
    vocab = build_vocabulary(texts, 2)
    longest = max(len(to_sequence(t, vocab)) for t in texts)
    worst = 0.0
    pairs = generate_inter_category(train_catalog, seed=42)
    for n in [len(pairs), *range(0, 200), 999, 1001, 4567]:
        split = split_dataset(pairs[:n], seed=n)
        worst = max(worst, *(abs(got - n * r) for got, r in zip(split.sizes(), (0.7, 0.1, 0.2))))
    ok = longest <= 512 and worst <= 1
    verdict(capsys, "truncation and split", ok, f"longest sequence {longest} (<=512), split deviation {worst:.2f} (<=1)")


def test_throughput(capsys, trained, deploy_catalog):
    scorer = TwinScorer(load_checkpoint(trained["dir"] / "inter.rhc"))
    score_catalog(deploy_catalog.__class__(deploy_catalog.products[:2], deploy_catalog.reviews[:80]), scorer)
    scorer = TwinScorer(scorer.params)  # fresh token memo
    t0 = time.perf_counter()
    n = len(score_catalog(deploy_catalog, scorer))
    rate = n / (time.perf_counter() - t0) * 60
    verdict(capsys, "scoring throughput", rate >= 50_000, f"{rate:,.0f} reviews/minute (>=50,000) over {n} reviews")
