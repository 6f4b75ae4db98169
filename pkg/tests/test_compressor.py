from __future__ import annotations

import random

import pytest

from conftest import make_template
from promptfold.compressor import (
    CompressionRequest,
    compress,
    load_sidecar,
    train_importance_model,
)
from promptfold.records import RecordParseError
from promptfold.tokenizer import token_texts


def _is_subsequence(sub: list[str], seq: list[str]) -> bool:
    it = iter(seq)
    return all(any(item == other for other in it) for item in sub)


def test_hand_counted_statistics():
    model = train_importance_model(["a a b"])
    # add-one smoothing over V = {a, b}: counts 2+1 and 1+1, total 3 + |V|
    assert model.counts == {"a": 3, "b": 2}
    assert model.total == 5
    assert model.vocabulary == frozenset({"a", "b"})


def test_unseen_token_scores_with_count_one():
    model = train_importance_model(["a a b"])
    assert model.score("zzz") > model.score("b") > model.score("a")


def test_duplicated_corpus_keeps_score_ordering():
    corpus = ["the quick fox", "jumps over the dog", "the end"]
    model_once = train_importance_model(corpus)
    model_twice = train_importance_model(corpus * 2)
    vocab = sorted(model_once.vocabulary)
    order_once = sorted(vocab, key=model_once.score)
    order_twice = sorted(vocab, key=model_twice.score)
    assert order_once == order_twice


def test_empty_corpus_rejected():
    with pytest.raises(ValueError, match="empty"):
        train_importance_model([])


def test_corpus_without_tokens_rejected():
    with pytest.raises(ValueError, match="no tokens"):
        train_importance_model([""])


def test_tau_one_is_identity_on_tokens():
    model = train_importance_model(["alpha beta gamma"])
    text = "alpha ( beta ) gamma\nnew line"
    result = compress(
        CompressionRequest(section_texts={"s": text}, tau=1.0), model
    )
    assert token_texts(result.sections["s"].text) == token_texts(text)
    assert result.achieved_tau == 1.0
    assert not result.over_budget


def test_tau_zero_empties_sections():
    model = train_importance_model(["alpha beta"])
    result = compress(
        CompressionRequest(
            section_texts={"a": "alpha beta gamma", "b": "one two"}, tau=0.0
        ),
        model,
    )
    assert result.sections["a"].text == ""
    assert result.sections["b"].text == ""
    assert result.achieved_tau == 0.0


def test_half_rate_keeps_highest_information_tokens_in_order():
    # common scores lowest; rare1/rare2 higher; unseen1 highest
    model = train_importance_model(["common common common common rare1 rare2"])
    text = (
        "common rare1 common rare2 unseen1 "
        "common common common common common"
    )
    result = compress(CompressionRequest(section_texts={"s": text}, tau=0.5), model)
    assert result.sections["s"].kept_indices == (0, 1, 2, 3, 4)
    assert result.sections["s"].text == "common rare1 common rare2 unseen1"


def test_tie_break_prefers_earlier_position():
    model = train_importance_model(["x y"])
    # all four tokens unseen, equal scores: keep the first two
    result = compress(
        CompressionRequest(section_texts={"s": "p q r s"}, tau=0.5), model
    )
    assert result.sections["s"].kept_indices == (0, 1)


def test_preserve_patterns_survive_zero_budget():
    model = train_importance_model(["filler words here"])
    result = compress(
        CompressionRequest(
            section_texts={"s": "keep {slot} drop the rest"},
            tau=0.0,
            preserve_patterns=("{slot}",),
        ),
        model,
    )
    assert result.sections["s"].text == "{ slot }"
    assert result.over_budget
    assert result.achieved_tau > 0.0


def test_preserved_tokens_fill_before_scores():
    model = train_importance_model(["rare word corpus common common common"])
    text = "common {slot} rare"
    result = compress(
        CompressionRequest(
            section_texts={"s": text}, tau=0.75, preserve_patterns=("{slot}",)
        ),
        model,
    )
    # 5 tokens, budget 4: the three pattern tokens plus the best scored one
    kept = result.sections["s"].kept_indices
    assert {1, 2, 3}.issubset(set(kept))
    assert len(kept) == 4


def test_empty_sections_define_achieved_tau_as_one():
    result = compress(
        CompressionRequest(section_texts={"a": "", "b": "  "}, tau=0.4), None
    )
    assert result.achieved_tau == 1.0


def test_invalid_tau_rejected():
    with pytest.raises(ValueError, match="tau"):
        compress(CompressionRequest(section_texts={"s": "a"}, tau=1.5), None)


def test_extractiveness_and_rate_accuracy():
    rng = random.Random(77)
    corpus = [make_template(rng, 120) for _ in range(5)]
    model = train_importance_model(corpus)
    for _ in range(60):
        text = make_template(rng, rng.randint(5, 160))
        original = token_texts(text)
        for tau in (0.9, 0.7, 0.5, 0.3, 0.1):
            result = compress(
                CompressionRequest(section_texts={"s": text}, tau=tau), model
            )
            section = result.sections["s"]
            assert _is_subsequence(token_texts(section.text), original)
            n = section.token_count
            assert abs(len(section.kept_indices) / n - tau) <= 1.0 / n


def test_nested_selections_across_decreasing_tau():
    rng = random.Random(78)
    model = train_importance_model([make_template(rng, 200)])
    for _ in range(40):
        text = make_template(rng, rng.randint(8, 120))
        taus = sorted(rng.uniform(0.0, 1.0) for _ in range(4))
        previous: set[int] = set()
        for tau in taus:
            kept = set(
                compress(CompressionRequest(section_texts={"s": text}, tau=tau), model)
                .sections["s"]
                .kept_indices
            )
            assert previous.issubset(kept)
            previous = kept


def test_deterministic_output_bytes():
    rng = random.Random(79)
    model = train_importance_model([make_template(rng, 100)])
    text = make_template(rng, 64)
    request = CompressionRequest(section_texts={"s": text}, tau=0.4)
    first = compress(request, model)
    second = compress(request, model)
    assert first.sections["s"].text == second.sections["s"].text


def test_sidecar_loading(tmp_path):
    path = tmp_path / "sidecar.jsonl"
    path.write_text(
        '{"id": "r1", "stage": 0, "template_text": "compressed"}\n'
        '{"id": "r1", "stage": 1, "template_text": "smaller"}\n'
    )
    mapping = load_sidecar(path)
    assert mapping == {("r1", 0): "compressed", ("r1", 1): "smaller"}


def test_sidecar_duplicate_rejected(tmp_path):
    path = tmp_path / "sidecar.jsonl"
    line = '{"id": "r1", "stage": 0, "template_text": "x"}\n'
    path.write_text(line + line)
    with pytest.raises(RecordParseError, match="duplicate"):
        load_sidecar(path)


def test_sidecar_missing_field_rejected(tmp_path):
    path = tmp_path / "sidecar.jsonl"
    path.write_text('{"id": "r1", "stage": 0}\n')
    with pytest.raises(RecordParseError, match="template_text"):
        load_sidecar(path)
