from __future__ import annotations

import json
import random

import pytest

from promptfold.records import (
    Dataset,
    PromptRecord,
    RecordParseError,
    StagedRecord,
    load_dataset,
    parse_record,
    parse_staged,
    read_staged,
    serialize_record,
    serialize_staged,
    write_dataset,
    write_staged,
)


def test_parse_minimal_record():
    record = parse_record(
        {"id": "r1", "template": {"instruction": ""}, "query": "q", "output": "o"}
    )
    assert record == PromptRecord(
        id="r1", instruction="", document="", examples=(), query="q", output="o"
    )


def test_parse_two_section_template_with_examples():
    record = parse_record(
        {
            "id": "r2",
            "template": {"instruction": "do the thing", "document": "API: SUM(range)"},
            "examples": [{"input": "a", "output": "b"}, ["c", "d"]],
            "query": "give me a formula",
            "output": "=SUM(A:A)",
        }
    )
    assert record.document == "API: SUM(range)"
    assert record.examples == (("a", "b"), ("c", "d"))


def test_missing_template_is_named_with_position():
    with pytest.raises(RecordParseError, match=r"record 3: missing field 'template'"):
        parse_record({"id": "r2", "query": ""}, position=3)


def test_empty_query_rejected():
    with pytest.raises(RecordParseError, match="query"):
        parse_record(
            {"id": "r", "template": {"instruction": "x"}, "query": "", "output": "o"}
        )


def test_missing_instruction_rejected():
    with pytest.raises(RecordParseError, match="template.instruction"):
        parse_record({"id": "r", "template": {}, "query": "q", "output": "o"})


def test_bad_example_shape_rejected():
    with pytest.raises(RecordParseError, match=r"examples\[0\]"):
        parse_record(
            {
                "id": "r",
                "template": {"instruction": ""},
                "examples": [["only-one"]],
                "query": "q",
                "output": "o",
            }
        )


def test_duplicate_id_rejected(tmp_path):
    path = tmp_path / "dups.jsonl"
    line = json.dumps(
        {"id": "same", "template": {"instruction": ""}, "query": "q", "output": "o"}
    )
    path.write_text(line + "\n" + line + "\n")
    with pytest.raises(RecordParseError, match="duplicate id"):
        load_dataset(path)


def test_staged_serialization_shape():
    staged = StagedRecord(
        base_id="r9",
        stage_index=2,
        rendered_prompt="q",
        output="o",
        tau_applied=0.0,
        k_applied=0,
    )
    obj = json.loads(serialize_staged(staged))
    assert obj == {"id": "r9", "stage": 2, "prompt": "q", "completion": "o", "tau": 0.0, "k": 0}


def test_staged_round_trip_with_control_characters():
    rng = random.Random(42)
    alphabet = 'abc"\\\n\t\r\x00é日 '
    for _ in range(200):
        staged = StagedRecord(
            base_id="id-" + str(rng.randint(0, 999)),
            stage_index=rng.randint(0, 5),
            rendered_prompt="".join(rng.choice(alphabet) for _ in range(rng.randint(0, 30))),
            output="".join(rng.choice(alphabet) for _ in range(rng.randint(1, 20))),
            tau_applied=rng.choice([0.0, 0.3, 0.5, 1.0]),
            k_applied=rng.randint(0, 10),
        )
        line = serialize_staged(staged)
        assert parse_staged(json.loads(line)) == staged


def test_dataset_ordering_survives_round_trip(tmp_path, fixture_dataset_path):
    dataset = load_dataset(fixture_dataset_path)
    out = tmp_path / "copy.jsonl"
    write_dataset(out, dataset)
    again = load_dataset(out)
    assert again == dataset
    assert [r.id for r in again.records] == [r.id for r in dataset.records]


def test_staged_file_round_trip(tmp_path):
    records = [
        StagedRecord("a", 0, "p one", "c one", 1.0, 2),
        StagedRecord("b", 0, "p two\nwith newline", 'say "hi"', 0.3, 1),
    ]
    path = tmp_path / "stage.jsonl"
    write_staged(path, records)
    assert read_staged(path) == records


def test_record_serialize_round_trip():
    record = PromptRecord(
        id="x",
        instruction="inst",
        document="doc",
        examples=(("i", "o"),),
        query="q",
        output="out",
    )
    assert parse_record(json.loads(serialize_record(record))) == record


def test_dataset_n_matches_records(fixture_dataset_path):
    dataset = load_dataset(fixture_dataset_path)
    assert dataset.n == len(dataset.records) == 12
