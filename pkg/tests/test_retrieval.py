from __future__ import annotations

import math
import random

import pytest

from promptfold.records import Dataset, PromptRecord
from promptfold.retrieval import bleu, build_bank, retrieve


def _record(rid: str, query: str, output: str) -> PromptRecord:
    return PromptRecord(
        id=rid, instruction="", document="", examples=(), query=query, output=output
    )


def _dataset(outputs: list[str]) -> Dataset:
    return Dataset(
        records=tuple(
            _record(f"r{i}", f"query {i}", out) for i, out in enumerate(outputs)
        )
    )


def test_identity_scores_one_exactly():
    for text in ("a", "a b", "ls - la / tmp", "SUM(A1:B2)", "one two three four five"):
        assert bleu(text, text) == 1.0


def test_zero_unigram_overlap_scores_zero_exactly():
    assert bleu("e f g h", "a b c d") == 0.0


def test_empty_strings_score_zero():
    assert bleu("", "a") == 0.0
    assert bleu("a", "") == 0.0
    assert bleu("", "") == 0.0


def test_prefix_pair_matches_hand_derivation():
    # candidate "ls - la / tmp" (5 tokens) vs reference with 2 extra tokens:
    # p1..p4 all 1, brevity penalty exp(1 - 7/5)
    assert bleu("ls - la / tmp", "ls - la / tmp / foo") == pytest.approx(
        math.exp(1.0 - 7.0 / 5.0), abs=1e-12
    )


def test_short_candidate_drops_vacuous_orders():
    # 2-token candidate: orders 1 and 2 only; p2 = 0 -> epsilon floor
    expected = math.exp((math.log(1.0) + math.log(1e-9)) / 2.0)
    assert bleu("a b", "b a") == pytest.approx(expected, abs=1e-12)


def test_clipping_counts_repeats_once():
    # p1 = 2/4 (three a's clip to one), p2 = 1/3, p3 and p4 floor at epsilon
    expected = math.exp(
        (math.log(0.5) + math.log(1.0 / 3.0) + 2 * math.log(1e-9)) / 4.0
    )
    assert bleu("a a a b", "a b") == pytest.approx(expected, abs=1e-12)


def test_build_bank_full_fraction_keeps_dataset_order():
    dataset = _dataset([f"out {i}" for i in range(8)])
    bank = build_bank(dataset, 1.0, seed=3)
    assert [e.record_id for e in bank.entries] == [r.id for r in dataset.records]
    assert [e.input_text for e in bank.entries] == [r.query for r in dataset.records]


def test_build_bank_subsample_is_deterministic():
    dataset = _dataset([f"out {i}" for i in range(10)])
    first = build_bank(dataset, 0.5, seed=11)
    second = build_bank(dataset, 0.5, seed=11)
    assert len(first.entries) == 5
    assert first == second
    different = build_bank(dataset, 0.5, seed=12)
    assert len(different.entries) == 5


def test_build_bank_rejects_bad_fractions():
    dataset = _dataset(["x", "y"])
    for fraction in (0.0, -0.1, 1.0001):
        with pytest.raises(ValueError, match="fraction"):
            build_bank(dataset, fraction, seed=0)


def test_retrieve_k_zero_returns_empty():
    dataset = _dataset(["a b", "a c", "a d"])
    bank = build_bank(dataset, 1.0, seed=0)
    assert retrieve(bank, dataset.records[0], 0) == []


def test_retrieve_negative_k_rejected():
    dataset = _dataset(["a b", "a c"])
    bank = build_bank(dataset, 1.0, seed=0)
    with pytest.raises(ValueError, match="non-negative"):
        retrieve(bank, dataset.records[0], -1)


def test_retrieve_excludes_self_and_degrades_to_available():
    dataset = _dataset(["same output"] * 4)
    bank = build_bank(dataset, 1.0, seed=0)
    got = retrieve(bank, dataset.records[1], 99)
    assert len(got) == 3
    assert ("query 1", "same output") not in got


def test_retrieve_matches_brute_force_oracle():
    rng = random.Random(2024)
    vocab = ["cp", "mv", "ls", "cat", "-", "r", "a", "/", "tmp", "etc", "log", "txt"]
    for _ in range(12):
        outputs = [
            " ".join(rng.choice(vocab) for _ in range(rng.randint(2, 7)))
            for _ in range(rng.randint(5, 40))
        ]
        dataset = _dataset(outputs)
        bank = build_bank(dataset, 1.0, seed=0)
        instance = dataset.records[rng.randrange(dataset.n)]
        scored = []
        for pos, entry in enumerate(bank.entries):
            if entry.record_id == instance.id:
                continue
            scored.append((-bleu(instance.output, entry.output_text), pos))
        scored.sort()
        for k in (1, 3, 10):
            expected = [
                (bank.entries[p].input_text, bank.entries[p].output_text)
                for _, p in scored[:k]
            ]
            assert retrieve(bank, instance, k) == expected


def test_retrieved_scores_are_non_increasing():
    rng = random.Random(7)
    vocab = ["x", "y", "z", "w", "(", ")"]
    outputs = [
        " ".join(rng.choice(vocab) for _ in range(rng.randint(2, 6)))
        for _ in range(30)
    ]
    dataset = _dataset(outputs)
    bank = build_bank(dataset, 1.0, seed=0)
    instance = dataset.records[0]
    got = retrieve(bank, instance, 30)
    scores = [bleu(instance.output, out) for _, out in got]
    assert all(a >= b for a, b in zip(scores, scores[1:]))
