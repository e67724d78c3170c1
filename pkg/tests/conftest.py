from __future__ import annotations

from pathlib import Path

import pytest

from revhijack._io import find_jsonl
from revhijack.corpus import filter_min_reviews, load_catalog

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures"


def _catalog(part: str):
    d = FIXTURES / part
    catalog, _ = load_catalog(find_jsonl(d, "products"), find_jsonl(d, "reviews"))
    return filter_min_reviews(catalog, 5)[0]


@pytest.fixture(scope="session")
def train_catalog():
    return _catalog("train")


@pytest.fixture(scope="session")
def deploy_catalog():
    return _catalog("deploy")
