"""``revhijack`` command line: ingest | generate | train | evaluate | score | report.

Settings resolve as command-line flag > JSON config file (``--config``) > default.
Every artifact carries a header with the tool version, a hash of the effective
configuration (output directory excluded) and the seed.  Files are written via
temp-file rename, so an interrupted run never leaves a truncated artifact.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error; on
failure a one-line JSON error object is written to stderr.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from pathlib import Path

from . import __version__, corpus, evaluation, scoring, synthgen
from ._io import atomic_write, config_hash, find_jsonl, open_text
from .model import checkpoint, twin
from .textprep import load_embeddings, save_json, tfidf_fit

log = logging.getLogger("revhijack")

DEFAULTS = {
    "seed": 42,
    "threads": 1,
    "deterministic": False,
    "min_reviews": 5,
    "paths": {
        "products": None,
        "reviews": None,
        "embeddings": None,
        "out": "run",
        "catalog": None,
        "dataset": None,
        "checkpoint": None,
        "external_scores": None,
        "scores": None,
    },
    "generate": {
        "strategy": "inter",
        "unrelated_fraction": synthgen.DEFAULT_UNRELATED_FRACTION,
        "max_pairs": 1000,
        "split_by_product": False,
        "ratios": [0.7, 0.1, 0.2],
    },
    "model": {k: v for k, v in twin.TwinConfig().to_json().items() if k != "seed"},
    "scorer": "checkpoint",
    "thresholds": {"flag": 0.5, "accuracy": 0.5},
}


class UsageError(Exception):
    def __init__(self, message: str, path: str | None = None):
        super().__init__(message)
        self.path = path


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(args) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    base = Path.cwd()
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}", str(path))
        try:
            user = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise UsageError(f"config is not valid JSON: {exc}", str(path)) from None
        unknown = set(user) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}", str(path))
        cfg = _merge(cfg, user)
        # relative paths in a config file are relative to that file
        base = path.resolve().parent
    for key, value in cfg["paths"].items():
        if value is not None:
            cfg["paths"][key] = str((base / value).resolve()) if not Path(value).is_absolute() else value

    flag_paths = {
        "out": "out", "products": "products", "reviews": "reviews", "embeddings": "embeddings",
        "catalog": "catalog", "dataset": "dataset", "checkpoint": "checkpoint",
        "external_scores": "external", "scores": "scores",
    }
    for key, attr in flag_paths.items():
        v = getattr(args, attr, None)
        if v is not None:
            cfg["paths"][key] = str(Path(v).resolve())
    for key in ("seed", "threads", "min_reviews"):
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    if getattr(args, "deterministic", False):
        cfg["deterministic"] = True
    for attr, key in (("strategy", "strategy"), ("unrelated_fraction", "unrelated_fraction"),
                      ("max_pairs", "max_pairs")):
        v = getattr(args, attr, None)
        if v is not None:
            cfg["generate"][key] = v
    if getattr(args, "split_by_product", False):
        cfg["generate"]["split_by_product"] = True
    for attr, key in (("encoder", "encoder"), ("epochs", "epochs"), ("lr", "learning_rate"),
                      ("batch_size", "batch_size"), ("embedding_dim", "embedding_dim")):
        v = getattr(args, attr, None)
        if v is not None:
            cfg["model"][key] = v
    if getattr(args, "scorer", None):
        cfg["scorer"] = args.scorer
    if getattr(args, "flag_threshold", None) is not None:
        cfg["thresholds"]["flag"] = args.flag_threshold
    if cfg["deterministic"]:
        cfg["threads"] = 1
    return cfg


def meta_for(cfg: dict, command: str) -> dict:
    hashed = copy.deepcopy(cfg)
    out = Path(hashed["paths"].pop("out"))
    for key, value in hashed["paths"].items():
        # paths inside the output directory hash by their relative location
        if value is not None and Path(value).is_relative_to(out):
            hashed["paths"][key] = "$OUT/" + Path(value).relative_to(out).as_posix()
    return {"tool": "revhijack", "version": __version__, "command": command,
            "config_hash": config_hash(hashed), "seed": cfg["seed"]}


def header_line(meta: dict) -> str:
    return f"revhijack {meta['version']} command={meta['command']} config_hash={meta['config_hash']} seed={meta['seed']}"


def _require(path: str | None, what: str) -> Path:
    if path is None:
        raise UsageError(f"no {what} path given")
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {p}", str(p))
    return p


def _out(cfg) -> Path:
    return Path(cfg["paths"]["out"])


def _write_text(path: Path, text: str) -> None:
    with atomic_write(path) as fh:
        fh.write(text)


def _write_json(path: Path, obj) -> None:
    _write_text(path, json.dumps(obj, indent=1, ensure_ascii=False) + "\n")


# -- commands ----------------------------------------------------------------

def cmd_ingest(cfg) -> dict:
    products = _require(cfg["paths"]["products"], "products")
    reviews = _require(cfg["paths"]["reviews"], "reviews")
    catalog, parse_info = corpus.load_catalog(products, reviews)
    catalog, stats = corpus.filter_min_reviews(catalog, cfg["min_reviews"])
    out = _out(cfg) / "catalog"
    with atomic_write(out / "products.jsonl") as fh:
        corpus.write_products(fh, catalog.products)
    with atomic_write(out / "reviews.jsonl") as fh:
        corpus.write_reviews(fh, catalog.reviews)
    summary = {"meta": meta_for(cfg, "ingest"), "parse": parse_info, "filter": stats}
    _write_json(out / "ingest.json", summary)
    return summary


def _catalog_dir(cfg) -> Path:
    return Path(cfg["paths"]["catalog"]) if cfg["paths"]["catalog"] else _out(cfg) / "catalog"


def _load_catalog_dir(cfg) -> corpus.Catalog:
    d = _catalog_dir(cfg)
    catalog, _ = corpus.load_catalog(_require(str(find_jsonl(d, "products")), "catalog products"),
                                     _require(str(find_jsonl(d, "reviews")), "catalog reviews"))
    return catalog


def cmd_generate(cfg) -> dict:
    catalog = _load_catalog_dir(cfg)
    g, seed = cfg["generate"], cfg["seed"]
    strategy = g["strategy"]
    if strategy not in ("inter", "intra", "both"):
        raise UsageError(f"unknown strategy {strategy!r}")
    pairs: list[synthgen.LabeledPair] = []
    if strategy in ("inter", "both"):
        pairs.extend(synthgen.generate_inter_category(catalog, g["unrelated_fraction"], seed))
    if strategy in ("intra", "both"):
        pairs.extend(synthgen.generate_intra_all(catalog, g["max_pairs"], seed))
    split = synthgen.split_dataset(pairs, tuple(g["ratios"]), seed, by_product=g["split_by_product"])
    meta = meta_for(cfg, "generate")
    out = _out(cfg) / "dataset"
    for name, part in (("pairs", pairs), ("train", split.train), ("validation", split.validation), ("test", split.test)):
        with atomic_write(out / f"{name}.jsonl") as fh:
            synthgen.write_pairs(fh, part, meta)
    summary = {
        "meta": meta,
        "pairs": len(pairs),
        "unrelated": sum(p.label for p in pairs),
        "related": sum(1 - p.label for p in pairs),
        "split": dict(zip(("train", "validation", "test"), split.sizes())),
    }
    _write_json(out / "summary.json", summary)
    return summary


def _dataset_dir(cfg) -> Path:
    return Path(cfg["paths"]["dataset"]) if cfg["paths"]["dataset"] else _out(cfg) / "dataset"


def _read_split(cfg) -> synthgen.DatasetSplit:
    d = _dataset_dir(cfg)
    parts = []
    for name in ("train", "validation", "test"):
        with open_text(_require(str(d / f"{name}.jsonl"), f"dataset {name} split")) as fh:
            parts.append(synthgen.read_pairs(fh))
    return synthgen.DatasetSplit(*parts, seed=cfg["seed"])


def twin_config(cfg) -> twin.TwinConfig:
    try:
        return twin.TwinConfig.from_json({**cfg["model"], "seed": cfg["seed"]})
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid model config: {exc}") from None


def cmd_train(cfg) -> dict:
    split = _read_split(cfg)
    config = twin_config(cfg)
    emb = None
    if cfg["paths"]["embeddings"]:
        with open_text(_require(cfg["paths"]["embeddings"], "embeddings")) as fh:
            emb = load_embeddings(fh)
    result = twin.train(split, config, emb)
    meta = meta_for(cfg, "train")
    out = _out(cfg) / "model"
    checkpoint.save_checkpoint(out / "checkpoint.rhc", result.params, meta)
    save_json(out / "vocab.json", result.params.vocab.to_json())
    metrics = {"meta": meta, "best_epoch": result.best_epoch, "history": result.history}
    _write_json(out / "metrics.json", metrics)
    return {"best_epoch": result.best_epoch, "final": result.history[-1]}


def _checkpoint_path(cfg) -> Path:
    path = cfg["paths"]["checkpoint"] or str(_out(cfg) / "model" / "checkpoint.rhc")
    return _require(path, "checkpoint")


def cmd_evaluate(cfg, split_name: str = "test") -> dict:
    d = _dataset_dir(cfg)
    with open_text(_require(str(d / f"{split_name}.jsonl"), f"dataset {split_name} split")) as fh:
        pairs = synthgen.read_pairs(fh)
    if cfg["scorer"] == "baseline":
        from .model.baseline import tfidf_baseline_score

        idf = tfidf_fit([p.product_text.text for p in pairs] + [p.review_text.text for p in pairs])
        u = [tfidf_baseline_score(p.product_text.text, p.review_text.text, idf) for p in pairs]
    else:
        params = checkpoint.load_checkpoint(_checkpoint_path(cfg))
        u, _ = twin.predict_pairs(params, pairs)
    labels = [p.label for p in pairs]
    report = evaluation.evaluate(u, labels, cfg["thresholds"]["accuracy"])
    meta = meta_for(cfg, "evaluate")
    out = _out(cfg) / "eval"
    _write_text(out / "report.json", report.to_json(meta))
    _write_text(out / "roc.csv", f"# {header_line(meta)}\n" + report.roc_csv())
    return {"n": report.n, "accuracy": report.accuracy, "auc": report.auc}


def cmd_score(cfg) -> dict:
    meta = meta_for(cfg, "score")
    out = _out(cfg) / "score"
    scorer_kind = cfg["scorer"]
    if cfg["paths"]["external_scores"]:
        scorer_kind = "external"
    omitted: list[str] = []
    if scorer_kind == "external":
        path = _require(cfg["paths"]["external_scores"], "external scores")
        known = None
        cat_dir = _catalog_dir(cfg)
        if find_jsonl(cat_dir, "reviews").exists():
            catalog = _load_catalog_dir(cfg)
            known = {r.review_id for r in catalog.reviews}
        rep = scoring.ExternalReport()
        with open_text(path) as fh:
            scored = scoring.ingest_external_scores(fh, known, rep)
        ingest_info = {"accepted": rep.parsed, "rejected": len(rep.skipped), "unknown_review_ids": len(rep.unknown)}
    else:
        catalog = _load_catalog_dir(cfg)
        if scorer_kind == "baseline":
            idf = tfidf_fit([corpus.assemble_product_text(p).text for p in catalog.products]
                            + [corpus.assemble_review_text(r).text for r in catalog.reviews])
            save_json(out / "idf.json", idf.to_json())
            scorer = scoring.BaselineScorer(idf)
        elif scorer_kind == "checkpoint":
            scorer = scoring.TwinScorer(checkpoint.load_checkpoint(_checkpoint_path(cfg)))
        else:
            raise UsageError(f"unknown scorer {scorer_kind!r}")
        scored = scoring.score_catalog(catalog, scorer, threads=cfg["threads"])
        has_reviews = {s.product_id for s in scored}
        omitted = [p.product_id for p in catalog.products if p.product_id not in has_reviews]
        ingest_info = None
    per_product = scoring.product_scores(scored)
    flagged = scoring.flag_products(per_product, cfg["thresholds"]["flag"])
    head = header_line(meta)
    _write_text(out / "reviews.csv", scoring.scored_reviews_csv(scored, head))
    _write_text(out / "products.csv", scoring.product_scores_csv(per_product, head))
    _write_text(out / "flagged.csv", scoring.product_scores_csv(flagged, head))
    dist = scoring.score_distribution(per_product)
    report = {
        "meta": meta,
        "scorer": scorer_kind,
        "reviews": len(scored),
        "products": len(per_product),
        "omitted_products": omitted,
        "flag_threshold": cfg["thresholds"]["flag"],
        "flagged": [s.product_id for s in flagged],
        "score_distribution": list(dist),
        "histograms": {s.product_id: list(s.histogram) for s in per_product},
    }
    if ingest_info is not None:
        report["external"] = ingest_info
    _write_json(out / "report.json", report)
    return {"reviews": len(scored), "products": len(per_product), "flagged": len(flagged)}


def cmd_report(cfg, product_id: str) -> dict:
    path = _require(cfg["paths"]["scores"] or str(_out(cfg) / "score" / "reviews.csv"), "scored reviews")
    with open_text(path) as fh:
        scored = [s for s in scoring.read_scored_reviews(fh) if s.product_id == product_id]
    if not scored:
        raise UsageError(f"no scored reviews for product {product_id!r}", str(path))
    (ps,) = scoring.product_scores(scored)
    meta = meta_for(cfg, "report")
    out = _out(cfg) / "report"
    safe = "".join(c if c.isalnum() or c in "-_." else "_" for c in product_id)
    _write_text(out / f"{safe}.csv", f"# {header_line(meta)} product={product_id}\n" + scoring.histogram_csv(ps.histogram))
    title = f"{product_id}: n={ps.n}, mean unrelated score {ps.score:.3f}"
    _write_text(out / f"{safe}.svg", scoring.histogram_svg(ps.histogram, title))
    return {"product_id": product_id, "n": ps.n, "score": ps.score, "histogram": list(ps.histogram)}


# -- argument parsing -----------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--config", default=argparse.SUPPRESS, help="JSON run configuration")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    g.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    g.add_argument("--deterministic", action="store_true", default=argparse.SUPPRESS,
                   help="single-threaded, order-stable reductions")
    g.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    g.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    ap = _Parser(prog="revhijack", parents=[common], description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"revhijack {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="parse, join and filter product/review JSON-lines")
    p.add_argument("--products")
    p.add_argument("--reviews")
    p.add_argument("--min-reviews", dest="min_reviews", type=int)

    p = sub.add_parser("generate", parents=[common], help="swap reviews into a labelled dataset and split it")
    p.add_argument("--catalog", help="directory written by ingest")
    p.add_argument("--strategy", choices=["inter", "intra", "both"])
    p.add_argument("--unrelated-fraction", dest="unrelated_fraction", type=float)
    p.add_argument("--max-pairs", dest="max_pairs", type=int)
    p.add_argument("--split-by-product", dest="split_by_product", action="store_true")

    p = sub.add_parser("train", parents=[common], help="train the twin encoder")
    p.add_argument("--dataset", help="directory written by generate")
    p.add_argument("--embeddings", help="word-vector text file")
    p.add_argument("--encoder", choices=list(twin.ENCODERS))
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--embedding-dim", dest="embedding_dim", type=int)

    p = sub.add_parser("evaluate", parents=[common], help="accuracy / AUC / ROC on a dataset split")
    p.add_argument("--dataset")
    p.add_argument("--checkpoint")
    p.add_argument("--split", default="test", choices=["train", "validation", "test"])
    p.add_argument("--scorer", choices=["checkpoint", "baseline"])

    p = sub.add_parser("score", parents=[common], help="score an intact catalog and flag suspicious products")
    p.add_argument("--catalog")
    p.add_argument("--checkpoint")
    p.add_argument("--external", help="CSV product_id,review_id,u from an external model")
    p.add_argument("--scorer", choices=["checkpoint", "baseline", "external"])
    p.add_argument("--flag-threshold", dest="flag_threshold", type=float)

    p = sub.add_parser("report", parents=[common], help="per-product unrelated-score distribution")
    p.add_argument("--product", required=True)
    p.add_argument("--scores", help="reviews.csv written by score")
    return ap


def _fail(code: int, kind: str, message: str, path: str | None = None) -> int:
    err = {"error": kind, "message": message}
    if path is not None:
        err["path"] = path
    sys.stderr.write(json.dumps(err) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail(2, "usage", str(exc))
    except SystemExit as exc:  # --help / --version
        return int(exc.code) if exc.code is not None else 0
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        cmd = args.command
        if cmd == "ingest":
            result = cmd_ingest(cfg)["filter"]
        elif cmd == "generate":
            result = cmd_generate(cfg)
            result.pop("meta")
        elif cmd == "train":
            result = cmd_train(cfg)
        elif cmd == "evaluate":
            result = cmd_evaluate(cfg, args.split)
        elif cmd == "score":
            result = cmd_score(cfg)
        else:
            result = cmd_report(cfg, args.product)
    except UsageError as exc:
        return _fail(2, "usage", str(exc), exc.path)
    except (synthgen.SwapError, twin.TrainingError, checkpoint.CheckpointError, evaluation.UndefinedAUC) as exc:
        return _fail(1, type(exc).__name__, str(exc))
    except Exception as exc:  # noqa: BLE001 - every failure must surface as JSON
        log.debug("failure", exc_info=True)
        return _fail(1, type(exc).__name__, str(exc))
    print(json.dumps(result, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
