"""Prompt records, datasets, and the staged JSONL wire formats.

A raw dataset is UTF-8 JSONL, one record per line:

    {"id": "...", "template": {"instruction": "...", "document": "..."},
     "examples": [{"input": "...", "output": "..."}], "query": "...",
     "output": "..."}

``examples`` and ``template.document`` are optional. Stage datasets use the
flat staged schema ``{id, stage, prompt, completion, tau, k}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterator


class RecordParseError(ValueError):
    """A dataset line does not match the record schema."""


def _where(position: int | None) -> str:
    return f"record {position}: " if position is not None else ""


@dataclass(frozen=True)
class PromptRecord:
    """One training/test instance: template sections, example slots, query, output."""

    id: str
    instruction: str
    document: str
    examples: tuple[tuple[str, str], ...]
    query: str
    output: str


@dataclass(frozen=True)
class Dataset:
    records: tuple[PromptRecord, ...]

    @property
    def n(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class StagedRecord:
    """A record rendered for one fine-tuning stage."""

    base_id: str
    stage_index: int
    rendered_prompt: str
    output: str
    tau_applied: float
    k_applied: int


def _require(obj: dict[str, Any], key: str, position: int | None) -> Any:
    if key not in obj:
        raise RecordParseError(f"{_where(position)}missing field {key!r}")
    return obj[key]


def _require_str(obj: dict[str, Any], key: str, position: int | None) -> str:
    value = _require(obj, key, position)
    if not isinstance(value, str):
        raise RecordParseError(f"{_where(position)}field {key!r} must be a string")
    return value


def _parse_example(item: Any, index: int, position: int | None) -> tuple[str, str]:
    if isinstance(item, dict):
        if "input" not in item or "output" not in item:
            raise RecordParseError(
                f"{_where(position)}examples[{index}] needs 'input' and 'output'"
            )
        pair = (item["input"], item["output"])
    elif isinstance(item, (list, tuple)) and len(item) == 2:
        pair = (item[0], item[1])
    else:
        raise RecordParseError(
            f"{_where(position)}examples[{index}] must be an input/output pair"
        )
    if not all(isinstance(part, str) for part in pair):
        raise RecordParseError(
            f"{_where(position)}examples[{index}] values must be strings"
        )
    return pair


def parse_record(obj: Any, position: int | None = None) -> PromptRecord:
    """Validate one raw JSON object into a :class:`PromptRecord`.

    ``position`` is the 1-based line number used in error messages. Missing
    ``examples`` defaults to the empty list; a missing ``template.document``
    defaults to the empty string.
    """
    if not isinstance(obj, dict):
        raise RecordParseError(f"{_where(position)}record must be a JSON object")
    record_id = _require_str(obj, "id", position)
    template = _require(obj, "template", position)
    if not isinstance(template, dict):
        raise RecordParseError(f"{_where(position)}field 'template' must be an object")
    if "instruction" not in template:
        raise RecordParseError(
            f"{_where(position)}missing field 'template.instruction'"
        )
    instruction = template["instruction"]
    document = template.get("document", "")
    if not isinstance(instruction, str) or not isinstance(document, str):
        raise RecordParseError(
            f"{_where(position)}template sections must be strings"
        )
    query = _require_str(obj, "query", position)
    if not query:
        raise RecordParseError(f"{_where(position)}field 'query' must be non-empty")
    output = _require_str(obj, "output", position)
    raw_examples = obj.get("examples", [])
    if not isinstance(raw_examples, list):
        raise RecordParseError(f"{_where(position)}field 'examples' must be a list")
    examples = tuple(
        _parse_example(item, i, position) for i, item in enumerate(raw_examples)
    )
    return PromptRecord(
        id=record_id,
        instruction=instruction,
        document=document,
        examples=examples,
        query=query,
        output=output,
    )


def record_to_dict(record: PromptRecord) -> dict[str, Any]:
    obj: dict[str, Any] = {
        "id": record.id,
        "template": {"instruction": record.instruction, "document": record.document},
        "query": record.query,
        "output": record.output,
    }
    if record.examples:
        obj["examples"] = [
            {"input": inp, "output": out} for inp, out in record.examples
        ]
    return obj


def serialize_record(record: PromptRecord) -> str:
    return json.dumps(record_to_dict(record), ensure_ascii=False)


def serialize_staged(record: StagedRecord) -> str:
    """One JSON line per staged record; round-trips losslessly."""
    return json.dumps(
        {
            "id": record.base_id,
            "stage": record.stage_index,
            "prompt": record.rendered_prompt,
            "completion": record.output,
            "tau": float(record.tau_applied),
            "k": int(record.k_applied),
        },
        ensure_ascii=False,
    )


def parse_staged(obj: Any, position: int | None = None) -> StagedRecord:
    if not isinstance(obj, dict):
        raise RecordParseError(f"{_where(position)}staged record must be a JSON object")
    base_id = _require_str(obj, "id", position)
    stage = _require(obj, "stage", position)
    if not isinstance(stage, int) or isinstance(stage, bool) or stage < 0:
        raise RecordParseError(
            f"{_where(position)}field 'stage' must be a non-negative integer"
        )
    prompt = _require_str(obj, "prompt", position)
    completion = _require_str(obj, "completion", position)
    tau = _require(obj, "tau", position)
    if not isinstance(tau, (int, float)) or isinstance(tau, bool) or not 0.0 <= tau <= 1.0:
        raise RecordParseError(f"{_where(position)}field 'tau' must be in [0, 1]")
    k = _require(obj, "k", position)
    if not isinstance(k, int) or isinstance(k, bool) or k < 0:
        raise RecordParseError(
            f"{_where(position)}field 'k' must be a non-negative integer"
        )
    return StagedRecord(
        base_id=base_id,
        stage_index=stage,
        rendered_prompt=prompt,
        output=completion,
        tau_applied=float(tau),
        k_applied=k,
    )


def iter_jsonl(path: str | Path) -> Iterator[tuple[int, Any]]:
    """Yield ``(line_number, parsed_object)`` pairs; blank lines are skipped."""
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordParseError(f"{path}:{lineno}: invalid JSON: {exc}") from exc


def load_dataset(path: str | Path) -> Dataset:
    records: list[PromptRecord] = []
    seen: set[str] = set()
    for lineno, obj in iter_jsonl(path):
        record = parse_record(obj, position=lineno)
        if record.id in seen:
            raise RecordParseError(f"record {lineno}: duplicate id {record.id!r}")
        seen.add(record.id)
        records.append(record)
    return Dataset(records=tuple(records))


def write_dataset(path: str | Path, dataset: Dataset) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in dataset.records:
            handle.write(serialize_record(record) + "\n")


def read_staged(path: str | Path) -> list[StagedRecord]:
    return [parse_staged(obj, position=lineno) for lineno, obj in iter_jsonl(path)]


def write_staged(path: str | Path, records: list[StagedRecord]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(serialize_staged(record) + "\n")
