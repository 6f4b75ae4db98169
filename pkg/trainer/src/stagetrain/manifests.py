"""Readers for the preprocessing run contract: manifests plus stage JSONL.

A run directory contains ``manifests/stage_{s}.json`` files whose
``iteration_range`` values tile ``[0, T)`` and whose ``dataset_path`` points
(relative to the run directory) at a stage dataset in the staged schema
``{id, stage, prompt, completion, tau, k}``. Raw test datasets use the record
schema with ``template``/``query``/``output`` fields.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class StageSpec:
    stage_index: int
    start: int
    end: int
    dataset_path: Path
    tau: float
    k: int

    @property
    def steps(self) -> int:
        return self.end - self.start


def load_manifests(run_dir: str | Path) -> list[StageSpec]:
    """Load and validate all stage manifests of one preprocessing run."""
    run_path = Path(run_dir)
    manifest_dir = run_path / "manifests"
    paths = sorted(manifest_dir.glob("stage_*.json"))
    if not paths:
        raise FileNotFoundError(f"no stage manifests under {manifest_dir}")
    specs = []
    for path in paths:
        with open(path, encoding="utf-8") as handle:
            obj = json.load(handle)
        start, end = obj["iteration_range"]
        specs.append(
            StageSpec(
                stage_index=obj["stage_index"],
                start=start,
                end=end,
                dataset_path=run_path / obj["dataset_path"],
                tau=obj["tau"],
                k=obj["k"],
            )
        )
    specs.sort(key=lambda spec: spec.stage_index)
    if [spec.stage_index for spec in specs] != list(range(len(specs))):
        raise ValueError("stage manifests must form a contiguous 0..n-1 sequence")
    if specs[0].start != 0:
        raise ValueError("first stage must start at iteration 0")
    for left, right in zip(specs, specs[1:]):
        if left.end != right.start:
            raise ValueError(
                f"iteration ranges must tile: stage {left.stage_index} ends at "
                f"{left.end} but stage {right.stage_index} starts at {right.start}"
            )
    return specs


def read_stage_records(path: str | Path) -> list[tuple[str, str]]:
    """Read one stage dataset into ``(prompt, completion)`` pairs."""
    pairs: list[tuple[str, str]] = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            if "prompt" not in obj or "completion" not in obj:
                raise ValueError(f"{path}:{lineno}: staged line needs prompt/completion")
            pairs.append((obj["prompt"], obj["completion"]))
    return pairs


def read_test_records(path: str | Path) -> list[tuple[str, str, str]]:
    """Read a raw dataset into ``(id, query, output)`` triples."""
    rows: list[tuple[str, str, str]] = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            try:
                rows.append((obj["id"], obj["query"], obj["output"]))
            except KeyError as exc:
                raise ValueError(f"{path}:{lineno}: record missing {exc}") from exc
    return rows
