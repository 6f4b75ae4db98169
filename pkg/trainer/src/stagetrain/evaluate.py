"""Query-only evaluation with exact-match and BLEU scoring.

The BLEU here re-implements the preprocessing side's documented definition
(word/punctuation tokens; clipped n-gram precisions for orders 1..4 skipping
orders longer than the candidate; 1e-9 floor on zero precisions; brevity
penalty exp(1 - ref_len/cand_len) for short candidates; hard zero on empty
input or zero unigram overlap) so scores agree across the file-contract
boundary; the test suite pins that agreement to 1e-9 against the primary
package.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from typing import Protocol

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")
_EPSILON = 1e-9
_MAX_ORDER = 4

METRICS = ("exact_match", "bleu")


class Generator(Protocol):
    def generate(self, prompt: str) -> str: ...


def _tokens(text: str) -> list[str]:
    return _TOKEN_RE.findall(text)


def _ngram_counts(tokens: list[str], order: int) -> Counter:
    return Counter(
        tuple(tokens[i : i + order]) for i in range(len(tokens) - order + 1)
    )


def bleu(candidate: str, reference: str) -> float:
    cand = _tokens(candidate)
    ref = _tokens(reference)
    if not cand or not ref:
        return 0.0
    ref_unigrams = set(ref)
    if not any(token in ref_unigrams for token in cand):
        return 0.0
    log_sum = 0.0
    orders = 0
    for order in range(1, _MAX_ORDER + 1):
        cand_counts = _ngram_counts(cand, order)
        if not cand_counts:
            break
        ref_counts = _ngram_counts(ref, order)
        clipped = sum(
            min(count, ref_counts.get(gram, 0))
            for gram, count in cand_counts.items()
        )
        precision = clipped / sum(cand_counts.values())
        log_sum += math.log(precision) if precision > 0.0 else math.log(_EPSILON)
        orders += 1
    penalty = 1.0 if len(cand) >= len(ref) else math.exp(1.0 - len(ref) / len(cand))
    return penalty * math.exp(log_sum / orders)


def normalize_whitespace(text: str) -> str:
    return " ".join(text.split())


def exact_match(prediction: str, truth: str) -> float:
    return 1.0 if normalize_whitespace(prediction) == normalize_whitespace(truth) else 0.0


def evaluate(
    generator: Generator,
    test_records: list[tuple[str, str, str]],
    metric: str,
) -> float:
    """Mean score of greedy query-only generations against ground truth.

    ``test_records`` are ``(id, query, output)`` triples; prompts are the bare
    queries, never template or example text.
    """
    if metric not in METRICS:
        raise ValueError(f"unsupported metric {metric!r}; expected one of {METRICS}")
    if not test_records:
        raise ValueError("test dataset is empty")
    score_fn = exact_match if metric == "exact_match" else bleu
    total = 0.0
    for _, query, truth in test_records:
        prompt = query
        assert prompt == query  # query-only contract: nothing prepended
        total += score_fn(generator.generate(prompt), truth)
    return total / len(test_records)
