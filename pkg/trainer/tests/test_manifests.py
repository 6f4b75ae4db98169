from __future__ import annotations

import json

import pytest

from stagetrain.manifests import load_manifests, read_stage_records, read_test_records


def test_load_manifests_orders_and_tiles(tiny_run):
    specs = load_manifests(tiny_run)
    assert [spec.stage_index for spec in specs] == [0, 1, 2]
    assert specs[0].start == 0
    assert all(a.end == b.start for a, b in zip(specs, specs[1:]))
    assert sum(spec.steps for spec in specs) == 12
    for spec in specs:
        assert spec.dataset_path.is_file()


def test_stage_records_have_prompt_and_completion(tiny_run):
    specs = load_manifests(tiny_run)
    pairs = read_stage_records(specs[0].dataset_path)
    assert len(pairs) == 24
    assert all(prompt and completion for prompt, completion in pairs)
    final_pairs = read_stage_records(specs[-1].dataset_path)
    assert all(prompt.startswith("lookup") for prompt, _ in final_pairs)


def test_missing_manifests_rejected(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_manifests(tmp_path)


def test_gapped_ranges_rejected(tmp_path):
    (tmp_path / "manifests").mkdir()
    for stage, (start, end) in enumerate(((0, 4), (5, 8))):
        (tmp_path / "manifests" / f"stage_{stage}.json").write_text(
            json.dumps(
                {
                    "stage_index": stage,
                    "iteration_range": [start, end],
                    "dataset_path": f"stages/stage_{stage}.jsonl",
                    "tau": 1.0,
                    "k": 0,
                }
            )
        )
    with pytest.raises(ValueError, match="tile"):
        load_manifests(tmp_path)


def test_read_test_records(tiny_run):
    rows = read_test_records(tiny_run.parent / "test.jsonl")
    assert len(rows) == 8
    rid, query, output = rows[0]
    assert rid == "test000"
    assert query.startswith("lookup")
    assert output.startswith("v")
