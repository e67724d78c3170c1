"""Untrained TF-IDF cosine scorer, used as a sanity baseline and fallback."""
from __future__ import annotations

from ..textprep import IdfModel, cosine_sparse, tfidf_transform


def tfidf_baseline_score(p_text: str, r_text: str, model: IdfModel) -> float:
    """u = 1 - cosine(tfidf(P), tfidf(R)), clamped to [0, 1]."""
    s = cosine_sparse(tfidf_transform(p_text, model), tfidf_transform(r_text, model))
    return min(1.0, max(0.0, 1.0 - s))
