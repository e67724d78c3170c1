"""Accuracy, ROC curve and rank-statistic AUC for unrelated-score predictions."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata


class UndefinedAUC(ValueError):
    pass


def _arrays(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be 1-d and of equal length")
    return s, y.astype(bool)


def accuracy(scores, labels, threshold: float = 0.5) -> float:
    """Fraction of pairs where ``score >= threshold`` agrees with ``label == 1``."""
    s, y = _arrays(scores, labels)
    if len(s) == 0:
        return float("nan")
    return float(np.mean((s >= threshold) == y))


def auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 P(tie)."""
    s, y = _arrays(scores, labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUC("undefined AUC: need at least one positive and one negative")
    # midranks make ties count one half
    ranks = rankdata(s, method="average")
    u_stat = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u_stat / (n_pos * n_neg))


def roc_curve(scores, labels) -> list[tuple[float, float, float]]:
    """(threshold, fpr, tpr) points from a sweep over unique scores, descending.

    The first point is (inf, 0, 0); tied scores move both rates at once so the
    trapezoidal area reproduces the tie-aware rank AUC.
    """
    s, y = _arrays(scores, labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUC("undefined ROC: need at least one positive and one negative")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.nonzero(np.diff(s))[0], len(s) - 1]
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    pts = [(float("inf"), 0.0, 0.0)]
    pts.extend((float(s[i]), fp[k] / n_neg, tp[k] / n_pos) for k, i in enumerate(last))
    return pts


def trapezoid_area(points: Sequence[tuple[float, float, float]]) -> float:
    fpr = np.array([p[1] for p in points])
    tpr = np.array([p[2] for p in points])
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) * 0.5))


@dataclass
class EvalReport:
    n: int
    accuracy: float
    auc: float | None
    tp: int
    fp: int
    tn: int
    fn: int
    threshold: float
    roc: list[tuple[float, float, float]]

    def to_json(self, meta: dict | None = None) -> str:
        d = asdict(self)
        d["roc"] = [[t if np.isfinite(t) else None, f, r] for t, f, r in self.roc]
        if meta is not None:
            d = {"meta": meta, **d}
        return json.dumps(d, indent=1) + "\n"

    def roc_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["threshold", "fpr", "tpr"])
        for t, f, r in self.roc:
            w.writerow([repr(t) if np.isfinite(t) else "inf", repr(f), repr(r)])
        return buf.getvalue()


def evaluate(scores, labels, threshold: float = 0.5) -> EvalReport:
    s, y = _arrays(scores, labels)
    pred = s >= threshold
    try:
        area, pts = auc(s, y), roc_curve(s, y)
    except UndefinedAUC:
        area, pts = None, []
    return EvalReport(
        n=len(s),
        accuracy=accuracy(s, y, threshold),
        auc=area,
        tp=int(np.sum(pred & y)),
        fp=int(np.sum(pred & ~y)),
        tn=int(np.sum(~pred & ~y)),
        fn=int(np.sum(~pred & y)),
        threshold=threshold,
        roc=pts,
    )
