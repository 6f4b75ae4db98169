"""Stage preprocessing: compress templates, retrieve examples, render, emit.

For every stage of the schedule, each record's template is compressed at the
stage rate, the stage's example count is retrieved for the record, and the
prompt is rendered and appended to ``stages/stage_{s}.jsonl``. One manifest
per stage plus a ``run_summary.json`` describe the emitted artifacts. The
whole run is deterministic under a fixed config: reruns produce byte-identical
files, and the config hash recorded everywhere detects drift.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .compressor import (
    CompressionRequest,
    ImportanceModel,
    compress,
    load_sidecar,
    train_importance_model,
)
from .records import Dataset, PromptRecord, StagedRecord, load_dataset, serialize_staged
from .retrieval import ExampleBank, build_bank, rank_entries
from .schedule import InternalizationSchedule, make_schedule
from .tokenizer import count_tokens

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RenderLayout:
    """Separators and headers for rendered prompts.

    The query section is always last; when the template is empty and there
    are no examples the rendered prompt is exactly the query string.
    """

    section_separator: str = "\n\n"
    examples_header: str = "### Examples"
    query_header: str = "### Query"
    example_separator: str = "\n"
    example_block_separator: str = "\n\n"


DEFAULT_LAYOUT = RenderLayout()


def render_prompt(
    template_text: str,
    examples: list[tuple[str, str]],
    query: str,
    layout: RenderLayout = DEFAULT_LAYOUT,
) -> str:
    """Concatenate the non-empty sections in layout order.

    A whitespace-only template counts as empty. With no template and no
    examples the result is the bare query with no headers or separators.
    """
    parts: list[str] = []
    if template_text.strip():
        parts.append(template_text)
    if examples:
        blocks = layout.example_block_separator.join(
            inp + layout.example_separator + out for inp, out in examples
        )
        parts.append(layout.examples_header + "\n" + blocks)
    if not parts:
        return query
    parts.append(layout.query_header + "\n" + query)
    return layout.section_separator.join(parts)


def build_inference_prompt(
    record: PromptRecord,
    template_text: str = "",
    layout: RenderLayout = DEFAULT_LAYOUT,
) -> str:
    """Query-only serving prompt; carries a residual template when one is given."""
    return render_prompt(template_text, [], record.query, layout)


@dataclass(frozen=True)
class StageManifest:
    """Declarative description of one emitted fine-tuning stage."""

    stage_index: int
    iteration_range: tuple[int, int]
    tau: float
    k: int
    dataset_path: str
    record_count: int
    total_prompt_tokens: int
    mean_prompt_tokens: float
    schedule: dict[str, Any]
    config_hash: str


def manifest_to_dict(manifest: StageManifest) -> dict[str, Any]:
    return {
        "stage_index": manifest.stage_index,
        "iteration_range": list(manifest.iteration_range),
        "tau": manifest.tau,
        "k": manifest.k,
        "dataset_path": manifest.dataset_path,
        "record_count": manifest.record_count,
        "token_stats": {
            "total_prompt_tokens": manifest.total_prompt_tokens,
            "mean_prompt_tokens": manifest.mean_prompt_tokens,
        },
        "schedule": manifest.schedule,
        "config_hash": manifest.config_hash,
    }


def load_manifest(path: str | Path) -> StageManifest:
    with open(path, encoding="utf-8") as handle:
        obj = json.load(handle)
    stats = obj["token_stats"]
    return StageManifest(
        stage_index=obj["stage_index"],
        iteration_range=(obj["iteration_range"][0], obj["iteration_range"][1]),
        tau=obj["tau"],
        k=obj["k"],
        dataset_path=obj["dataset_path"],
        record_count=obj["record_count"],
        total_prompt_tokens=stats["total_prompt_tokens"],
        mean_prompt_tokens=stats["mean_prompt_tokens"],
        schedule=obj["schedule"],
        config_hash=obj["config_hash"],
    )


_SCHEDULE_DEFAULTS: dict[str, Any] = {
    "pattern": "linear",
    "total_iterations": 300,
    "num_stages": 3,
    "tau_start": 1.0,
    "tau_final": 0.0,
    "k_start": 0,
    "lambda": 3.0,
    "tau_stages": None,
    "k_stages": None,
}

_LAYOUT_FIELDS = (
    "section_separator",
    "examples_header",
    "query_header",
    "example_separator",
    "example_block_separator",
)


@dataclass(frozen=True)
class PipelineConfig:
    """Fully-resolved pipeline configuration.

    ``resolved`` is the config document with every default filled in; it is
    echoed into ``run_summary.json`` and hashed into ``config_hash``. Paths
    stay as written in the config file and are resolved against ``base_dir``
    only when opening files, so the hash does not depend on where the config
    lives.
    """

    dataset_path: str
    output_dir: str | None
    seed: int
    schedule_spec: dict[str, Any]
    corpus_path: str | None
    preserve_patterns: tuple[str, ...]
    sidecar_path: str | None
    bank_fraction: float
    bank_seed: int
    layout: RenderLayout
    resolved: dict[str, Any]
    config_hash: str
    base_dir: Path

    def build_schedule(self) -> InternalizationSchedule:
        spec = self.schedule_spec
        return make_schedule(
            spec["pattern"],
            spec["total_iterations"],
            spec["num_stages"],
            spec["tau_final"],
            spec["k_start"],
            tau_start=spec["tau_start"],
            lam=spec["lambda"],
            tau_stages=spec["tau_stages"],
            k_stages=spec["k_stages"],
        )

    def resolve(self, path: str) -> Path:
        return self.base_dir / path


def _canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def resolve_config(raw: dict[str, Any], *, seed: int | None = None) -> dict[str, Any]:
    """Fill defaults into a raw config document; ``seed`` overrides the file's."""
    if not isinstance(raw, dict):
        raise ValueError("config must be a JSON object")
    if "dataset" not in raw or not isinstance(raw["dataset"], str):
        raise ValueError("config needs a 'dataset' path")
    schedule = dict(_SCHEDULE_DEFAULTS)
    schedule.update(raw.get("schedule", {}))
    unknown = set(schedule) - set(_SCHEDULE_DEFAULTS)
    if unknown:
        raise ValueError(f"unknown schedule fields: {sorted(unknown)}")
    compressor = raw.get("compressor", {})
    bank = raw.get("bank", {})
    layout_block = raw.get("layout", {})
    unknown = set(layout_block) - set(_LAYOUT_FIELDS)
    if unknown:
        raise ValueError(f"unknown layout fields: {sorted(unknown)}")
    effective_seed = raw.get("seed", 0) if seed is None else seed
    if not isinstance(effective_seed, int) or isinstance(effective_seed, bool):
        raise ValueError("seed must be an integer")
    layout = {name: layout_block.get(name, getattr(DEFAULT_LAYOUT, name)) for name in _LAYOUT_FIELDS}
    bank_seed = bank.get("seed")
    if bank_seed is None:
        bank_seed = effective_seed
    return {
        "dataset": raw["dataset"],
        "output_dir": raw.get("output_dir"),
        "seed": effective_seed,
        "schedule": schedule,
        "compressor": {
            "corpus": compressor.get("corpus"),
            "preserve_patterns": list(compressor.get("preserve_patterns", [])),
            "sidecar": compressor.get("sidecar"),
        },
        "bank": {"fraction": bank.get("fraction", 1.0), "seed": bank_seed},
        "layout": layout,
    }


def config_from_resolved(resolved: dict[str, Any], base_dir: Path) -> PipelineConfig:
    layout = RenderLayout(**resolved["layout"])
    bank = resolved["bank"]
    if not isinstance(bank["fraction"], (int, float)) or isinstance(bank["fraction"], bool):
        raise ValueError("bank fraction must be a number")
    return PipelineConfig(
        dataset_path=resolved["dataset"],
        output_dir=resolved["output_dir"],
        seed=resolved["seed"],
        schedule_spec=resolved["schedule"],
        corpus_path=resolved["compressor"]["corpus"],
        preserve_patterns=tuple(resolved["compressor"]["preserve_patterns"]),
        sidecar_path=resolved["compressor"]["sidecar"],
        bank_fraction=float(bank["fraction"]),
        bank_seed=int(bank["seed"]),
        layout=layout,
        resolved=resolved,
        config_hash=hashlib.sha256(_canonical_json(resolved).encode("utf-8")).hexdigest(),
        base_dir=base_dir,
    )


def load_config(path: str | Path, *, seed: int | None = None) -> PipelineConfig:
    """Read a JSON config file; relative paths resolve against its directory."""
    path = Path(path)
    with open(path, encoding="utf-8") as handle:
        try:
            raw = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON: {exc}") from exc
    resolved = resolve_config(raw, seed=seed)
    return config_from_resolved(resolved, path.parent)


def template_corpus(dataset: Dataset) -> list[str]:
    """Template texts used to train the importance model when no corpus file is given."""
    corpus: list[str] = []
    for record in dataset.records:
        if record.instruction:
            corpus.append(record.instruction)
        if record.document:
            corpus.append(record.document)
    return corpus


@dataclass
class _RecordOutput:
    lines: list[str]
    token_counts: list[int]
    achieved_taus: list[float]
    degraded_stages: list[int]


# Per-process state for worker parallelism; populated by fork or initializer.
_WORKER: dict[str, Any] = {}


def _init_worker(state: dict[str, Any]) -> None:
    _WORKER.update(state)


def _combine_sections(section_texts: dict[str, str], layout: RenderLayout) -> str:
    parts = [text for text in section_texts.values() if text.strip()]
    return layout.section_separator.join(parts)


def _process_record(index: int) -> _RecordOutput:
    dataset: Dataset = _WORKER["dataset"]
    schedule: InternalizationSchedule = _WORKER["schedule"]
    model: ImportanceModel | None = _WORKER["model"]
    bank: ExampleBank = _WORKER["bank"]
    layout: RenderLayout = _WORKER["layout"]
    sidecar: dict[tuple[str, int], str] = _WORKER["sidecar"]
    patterns: tuple[str, ...] = _WORKER["patterns"]

    record = dataset.records[index]
    ranking = rank_entries(bank, record)
    original_tokens = count_tokens(record.instruction) + count_tokens(record.document)
    out = _RecordOutput(lines=[], token_counts=[], achieved_taus=[], degraded_stages=[])
    for stage in range(schedule.num_stages):
        tau, k = schedule.stage_values(stage)
        slot = (record.id, stage)
        if slot in sidecar:
            template_text = sidecar[slot]
            achieved = (
                count_tokens(template_text) / original_tokens if original_tokens else 1.0
            )
        else:
            result = compress(
                CompressionRequest(
                    section_texts={
                        "instruction": record.instruction,
                        "document": record.document,
                    },
                    tau=tau,
                    preserve_patterns=patterns,
                ),
                model,
            )
            template_text = _combine_sections(result.section_texts, layout)
            achieved = result.achieved_tau
        positions = ranking[:k]
        if len(positions) < k:
            out.degraded_stages.append(stage)
        examples = [
            (bank.entries[p].input_text, bank.entries[p].output_text)
            for p in positions
        ]
        prompt = render_prompt(template_text, examples, record.query, layout)
        staged = StagedRecord(
            base_id=record.id,
            stage_index=stage,
            rendered_prompt=prompt,
            output=record.output,
            tau_applied=tau,
            k_applied=k,
        )
        out.lines.append(serialize_staged(staged))
        out.token_counts.append(count_tokens(prompt))
        out.achieved_taus.append(achieved)
    return out


def preprocess(
    dataset: Dataset,
    schedule: InternalizationSchedule,
    importance_model: ImportanceModel | None,
    bank: ExampleBank,
    config: PipelineConfig,
    out_dir: str | Path,
    jobs: int = 1,
) -> list[StageManifest]:
    """Emit one staged dataset and manifest per schedule stage under ``out_dir``.

    Every record appears exactly once per stage, in dataset order regardless
    of ``jobs``. Returns the manifests in stage order.
    """
    out_path = Path(out_dir)
    (out_path / "stages").mkdir(parents=True, exist_ok=True)
    (out_path / "manifests").mkdir(parents=True, exist_ok=True)

    sidecar = load_sidecar(config.resolve(config.sidecar_path)) if config.sidecar_path else {}
    state = {
        "dataset": dataset,
        "schedule": schedule,
        "model": importance_model,
        "bank": bank,
        "layout": config.layout,
        "sidecar": sidecar,
        "patterns": config.preserve_patterns,
    }
    _init_worker(state)
    if jobs > 1 and dataset.n > 1:
        with concurrent.futures.ProcessPoolExecutor(
            max_workers=jobs, initializer=_init_worker, initargs=(state,)
        ) as pool:
            outputs = list(pool.map(_process_record, range(dataset.n), chunksize=8))
    else:
        outputs = [_process_record(i) for i in range(dataset.n)]

    for output, record in zip(outputs, dataset.records):
        for stage in output.degraded_stages:
            _, k = schedule.stage_values(stage)
            logger.warning(
                "record %s stage %d: bank holds fewer than k=%d candidates; "
                "using all available",
                record.id,
                stage,
                k,
            )

    manifests: list[StageManifest] = []
    for stage in range(schedule.num_stages):
        tau, k = schedule.stage_values(stage)
        rel_path = f"stages/stage_{stage}.jsonl"
        with open(out_path / rel_path, "w", encoding="utf-8") as handle:
            for output in outputs:
                handle.write(output.lines[stage] + "\n")
        counts = [output.token_counts[stage] for output in outputs]
        total = sum(counts)
        manifest = StageManifest(
            stage_index=stage,
            iteration_range=schedule.stage_range(stage),
            tau=tau,
            k=k,
            dataset_path=rel_path,
            record_count=dataset.n,
            total_prompt_tokens=total,
            mean_prompt_tokens=total / len(counts) if counts else 0.0,
            schedule=config.schedule_spec,
            config_hash=config.config_hash,
        )
        with open(out_path / "manifests" / f"stage_{stage}.json", "w", encoding="utf-8") as handle:
            json.dump(manifest_to_dict(manifest), handle, indent=2, ensure_ascii=False)
            handle.write("\n")
        manifests.append(manifest)

    mean_achieved = [
        sum(output.achieved_taus[s] for output in outputs) / dataset.n
        if dataset.n
        else 1.0
        for s in range(schedule.num_stages)
    ]
    degraded = sum(len(output.degraded_stages) for output in outputs)
    summary = {
        "config_hash": config.config_hash,
        "seed": config.seed,
        "resolved_config": config.resolved,
        "stages": [
            {
                "stage_index": m.stage_index,
                "iteration_range": list(m.iteration_range),
                "tau": m.tau,
                "k": m.k,
                "dataset_path": m.dataset_path,
                "record_count": m.record_count,
                "total_prompt_tokens": m.total_prompt_tokens,
                "mean_prompt_tokens": m.mean_prompt_tokens,
                "mean_achieved_tau": mean_achieved[m.stage_index],
            }
            for m in manifests
        ],
        "bank_size": len(bank.entries),
        "degraded_retrievals": degraded,
    }
    with open(out_path / "run_summary.json", "w", encoding="utf-8") as handle:
        json.dump(summary, handle, indent=2, ensure_ascii=False)
        handle.write("\n")
    return manifests


def build_components(
    config: PipelineConfig,
) -> tuple[Dataset, InternalizationSchedule, ImportanceModel | None, ExampleBank]:
    """Load the dataset and derive schedule, importance model, and bank."""
    dataset = load_dataset(config.resolve(config.dataset_path))
    schedule = config.build_schedule()
    if config.corpus_path:
        with open(config.resolve(config.corpus_path), encoding="utf-8") as handle:
            corpus = [line.rstrip("\n") for line in handle if line.strip()]
    else:
        corpus = template_corpus(dataset)
    model = train_importance_model(corpus) if any(corpus) else None
    bank = build_bank(dataset, config.bank_fraction, config.bank_seed)
    return dataset, schedule, model, bank


def run_preprocess(
    config: PipelineConfig, out_dir: str | Path | None = None, jobs: int = 1
) -> list[StageManifest]:
    """End-to-end preprocess run from a resolved config."""
    if out_dir is None:
        if config.output_dir is None:
            raise ValueError("no output directory: set 'output_dir' or pass --out")
        out_dir = config.resolve(config.output_dir)
    dataset, schedule, model, bank = build_components(config)
    return preprocess(dataset, schedule, model, bank, config, out_dir, jobs=jobs)
