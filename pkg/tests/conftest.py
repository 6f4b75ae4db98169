from __future__ import annotations

import random
from pathlib import Path

import pytest

DATA_DIR = Path(__file__).parent / "data"

# Pool of single-token items (words and punctuation) for synthetic templates.
_WORDS = [
    "the", "a", "of", "to", "and", "in", "is", "for", "with", "on",
    "value", "range", "table", "column", "row", "cell", "count", "total",
    "formula", "request", "select", "filter", "match", "index", "lookup",
    "mean", "max", "min", "sum", "if", "then", "else", "key", "item",
    "report", "stage", "token", "prompt", "query", "output", "input",
    "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "omega", "sigma",
]
_PUNCT = ["(", ")", ":", ",", ".", "=", ">", "<", "/", "-"]


def make_template(rng: random.Random, n_tokens: int) -> str:
    """Build a template of exactly ``n_tokens`` tokenizer tokens."""
    items = []
    for _ in range(n_tokens):
        if rng.random() < 0.15:
            items.append(rng.choice(_PUNCT))
        else:
            items.append(rng.choice(_WORDS))
    return " ".join(items)


@pytest.fixture
def fixture_dataset_path() -> Path:
    return DATA_DIR / "nl2f_small.jsonl"


@pytest.fixture
def golden_config_path() -> Path:
    return DATA_DIR / "golden_config.json"


@pytest.fixture
def prices_path() -> Path:
    return DATA_DIR / "prices.json"
