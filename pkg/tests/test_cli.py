import json
from pathlib import Path

import pytest

from revhijack import cli
from revhijack.fixture import write_part


@pytest.fixture(scope="module")
def mini(tmp_path_factory):
    root = tmp_path_factory.mktemp("mini")
    write_part(root / "train", 3, per_category=6, reviews_range=(6, 10))
    write_part(root / "deploy", 3, part="deploy", per_category=6, reviews_range=(6, 10), n_planted=2)
    return root


def _run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    cap = capsys.readouterr()
    return code, cap.out, cap.err


SMALL = ["--embedding-dim", "8", "--epochs", "2", "--lr", "0.01"]


def _pipeline(capsys, mini, out):
    assert _run(capsys, "ingest", "--products", mini / "train/products.jsonl",
                "--reviews", mini / "train/reviews.jsonl", "--out", out)[0] == 0
    assert _run(capsys, "generate", "--out", out, "--seed", 42)[0] == 0
    assert _run(capsys, "train", "--out", out, "--seed", 42, "--deterministic", *SMALL)[0] == 0
    assert _run(capsys, "--seed", "42", "score", "--out", out, "--catalog", mini / "deploy")[0] == 0


def test_pipeline_outputs_and_headers(capsys, mini, tmp_path):
    out = tmp_path / "run"
    _pipeline(capsys, mini, out)
    first = (out / "dataset/train.jsonl").read_text().splitlines()[0]
    meta = json.loads(first)["_meta"]
    assert meta["seed"] == 42 and len(meta["config_hash"]) == 16
    assert (out / "score/products.csv").read_text().startswith("# revhijack")
    metrics = json.loads((out / "model/metrics.json").read_text())
    assert metrics["meta"]["config_hash"]
    code, stdout, _ = _run(capsys, "evaluate", "--out", out)
    assert code == 0 and 0.0 <= json.loads(stdout)["accuracy"] <= 1.0
    pid = (out / "score/products.csv").read_text().splitlines()[2].split(",")[0]
    assert _run(capsys, "report", "--out", out, "--product", pid)[0] == 0
    assert (out / "report" / f"{pid}.svg").read_text().startswith("<svg")


def test_runs_are_byte_identical(capsys, mini, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    _pipeline(capsys, mini, a)
    _pipeline(capsys, mini, b)
    files = ["dataset/train.jsonl", "dataset/test.jsonl", "model/metrics.json", "model/checkpoint.rhc",
             "score/reviews.csv", "score/products.csv", "score/report.json"]
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes(), f


def test_missing_input_is_usage_error(capsys, tmp_path):
    code, _, err = _run(capsys, "ingest", "--products", tmp_path / "nope.jsonl",
                        "--reviews", tmp_path / "nope2.jsonl", "--out", tmp_path)
    assert code == 2
    obj = json.loads(err.strip().splitlines()[-1])
    assert obj["error"] == "usage" and "nope.jsonl" in obj["path"]


def test_bad_flag_is_usage_error(capsys):
    code, _, err = _run(capsys, "train", "--encoder", "gru")
    assert code == 2 and json.loads(err)["error"] == "usage"


def test_config_file_and_flag_precedence(capsys, mini, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 3, "min_reviews": 50, "paths": {"out": "o"}}))
    code, stdout, _ = _run(capsys, "ingest", "--config", cfg, "--products", mini / "train/products.jsonl",
                           "--reviews", mini / "train/reviews.jsonl")
    assert code == 0 and json.loads(stdout)["products_out"] == 0  # min_reviews 50 from the file
    assert (tmp_path / "o/catalog/ingest.json").exists()  # relative to the config file
    code, stdout, _ = _run(capsys, "ingest", "--config", cfg, "--min-reviews", "1",
                           "--products", mini / "train/products.jsonl", "--reviews", mini / "train/reviews.jsonl")
    assert json.loads(stdout)["products_out"] == 24


def test_unknown_config_key(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"sed": 1}')
    code, _, err = _run(capsys, "ingest", "--config", cfg)
    assert code == 2 and "sed" in err


def test_external_scores(capsys, mini, tmp_path):
    ext = tmp_path / "ext.csv"
    ext.write_text("product_id,review_id,u\nA,A#0,0.9\nA,A#1,0.8\nB,B#0,0.1\nB,B#1,7\n")
    out = tmp_path / "run"
    code, stdout, _ = _run(capsys, "score", "--out", out, "--external", ext, "--catalog", tmp_path / "none")
    assert code == 0
    report = json.loads((out / "score/report.json").read_text())
    assert report["flagged"] == ["A"] and report["external"]["rejected"] == 1
