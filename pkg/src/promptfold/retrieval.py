"""Example bank construction and BLEU-scored top-k retrieval.

Relevance between a training instance and a bank entry is BLEU computed over
the two ground-truth outputs, never over queries. The bank holds (query,
output) pairs drawn from the training split, optionally subsampled to a
fraction of it.
"""

from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import dataclass

from .records import Dataset, PromptRecord
from .tokenizer import token_texts

_EPSILON = 1e-9
_MAX_ORDER = 4


def _ngram_counts(tokens: list[str], order: int) -> Counter:
    return Counter(
        tuple(tokens[i : i + order]) for i in range(len(tokens) - order + 1)
    )


def bleu(candidate: str, reference: str) -> float:
    """Clipped n-gram precision BLEU for one candidate/reference pair.

    The score is the brevity penalty times the geometric mean of clipped
    n-gram precisions for orders 1..4, uniformly weighted. Orders longer
    than the candidate contribute no n-grams and are skipped so that
    ``bleu(x, x) == 1.0`` exactly for any non-empty ``x``. A precision of
    zero is floored at 1e-9 before the geometric mean. Hard zeros: an empty
    candidate or reference, and a candidate sharing no unigram with the
    reference. The brevity penalty is ``exp(1 - ref_len/cand_len)`` when the
    candidate is shorter than the reference, else 1.
    """
    cand = token_texts(candidate)
    ref = token_texts(reference)
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
    penalty = (
        1.0 if len(cand) >= len(ref) else math.exp(1.0 - len(ref) / len(cand))
    )
    return penalty * math.exp(log_sum / orders)


@dataclass(frozen=True)
class BankEntry:
    record_id: str
    input_text: str
    output_text: str


@dataclass(frozen=True)
class ExampleBank:
    entries: tuple[BankEntry, ...]
    source_fraction: float
    seed: int


def build_bank(dataset: Dataset, fraction: float, seed: int) -> ExampleBank:
    """Deterministically subsample the training split into a retrieval bank.

    ``fraction`` must be in (0, 1]. The bank keeps dataset order; for
    ``fraction < 1`` it holds ``floor(fraction * n)`` records sampled without
    replacement under ``seed``.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"bank fraction must be in (0, 1], got {fraction}")
    size = math.floor(fraction * dataset.n)
    indices = sorted(random.Random(seed).sample(range(dataset.n), size))
    entries = tuple(
        BankEntry(
            record_id=dataset.records[i].id,
            input_text=dataset.records[i].query,
            output_text=dataset.records[i].output,
        )
        for i in indices
    )
    return ExampleBank(entries=entries, source_fraction=fraction, seed=seed)


def rank_entries(bank: ExampleBank, instance: PromptRecord) -> list[int]:
    """Bank positions ordered by descending BLEU(instance output, entry output).

    The instance's own record is excluded; ties break toward the earlier
    bank position. Used by :func:`retrieve` and by the pipeline, which takes
    prefixes of one ranking so per-stage example lists nest.
    """
    scored = [
        (-bleu(instance.output, entry.output_text), position)
        for position, entry in enumerate(bank.entries)
        if entry.record_id != instance.id
    ]
    scored.sort()
    return [position for _, position in scored]


def retrieve(
    bank: ExampleBank, instance: PromptRecord, k: int
) -> list[tuple[str, str]]:
    """Top-k most relevant ``(input, output)`` example pairs for ``instance``."""
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    positions = rank_entries(bank, instance)[:k]
    return [
        (bank.entries[p].input_text, bank.entries[p].output_text) for p in positions
    ]
