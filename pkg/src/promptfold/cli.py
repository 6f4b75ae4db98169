"""Command-line surface: one subcommand per pipeline responsibility.

Exit codes: 0 success, 1 validation error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import accounting, pipeline
from .compressor import CompressionRequest, compress
from .records import RecordParseError
from .retrieval import retrieve
from .schedule import make_schedule

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2


class _UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # Map argparse usage failures onto the validation exit code.
    def error(self, message: str) -> None:  # type: ignore[override]
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="promptfold", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="emit stage datasets, manifests, and summary")
    p.add_argument("config", help="pipeline config JSON")
    p.add_argument("--out", help="output directory (overrides config output_dir)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")

    p = sub.add_parser("compress", help="compress text with the config's importance model")
    p.add_argument("config", help="pipeline config JSON")
    p.add_argument("--tau", type=float, required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--text", help="text to compress")
    group.add_argument("--input", help="file whose contents to compress")

    p = sub.add_parser("retrieve", help="top-k examples for one record")
    p.add_argument("config", help="pipeline config JSON")
    p.add_argument("--id", required=True, help="record id from the dataset")
    p.add_argument("--k", type=int, required=True)

    p = sub.add_parser("schedule-preview", help="print per-stage (range, tau, k)")
    p.add_argument("--pattern", default="linear")
    p.add_argument("--iterations", type=int, required=True)
    p.add_argument("--stages", type=int, required=True)
    p.add_argument("--tau-final", type=float, required=True)
    p.add_argument("--k-start", type=int, required=True)
    p.add_argument("--tau-start", type=float, default=1.0)
    p.add_argument("--lambda", dest="lam", type=float, default=3.0)

    p = sub.add_parser("report", help="token, ratio, and cost report")
    p.add_argument("baseline", help="stage JSONL file or run directory (first stage)")
    p.add_argument("final", help="stage JSONL file or run directory (last stage)")
    p.add_argument("--prices", required=True, help="price table JSON")
    p.add_argument("--model", required=True)
    p.add_argument("--json", action="store_true", help="emit the report as JSON")

    p = sub.add_parser("build-inference", help="emit query-only inference prompts")
    p.add_argument("config", help="pipeline config JSON")
    p.add_argument("--dataset", help="override the config dataset (e.g. a test split)")
    p.add_argument("--out", help="output JSONL file (default: stdout)")
    return parser


def _cmd_preprocess(args: argparse.Namespace) -> int:
    config = pipeline.load_config(args.config, seed=args.seed)
    out_dir = Path(args.out) if args.out else None
    manifests = pipeline.run_preprocess(config, out_dir, jobs=args.jobs)
    for manifest in manifests:
        print(
            f"stage {manifest.stage_index}: {manifest.dataset_path} "
            f"({manifest.record_count} records, tau={manifest.tau:g}, k={manifest.k}, "
            f"{manifest.total_prompt_tokens} prompt tokens)"
        )
    print(f"config hash: {config.config_hash}")
    return EXIT_OK


def _cmd_compress(args: argparse.Namespace) -> int:
    config = pipeline.load_config(args.config)
    dataset, _, model, _ = pipeline.build_components(config)
    del dataset
    if args.text is not None:
        text = args.text
    else:
        with open(args.input, encoding="utf-8") as handle:
            text = handle.read()
    result = compress(
        CompressionRequest(
            section_texts={"text": text},
            tau=args.tau,
            preserve_patterns=config.preserve_patterns,
        ),
        model,
    )
    print(
        json.dumps(
            {
                "text": result.sections["text"].text,
                "achieved_tau": result.achieved_tau,
                "over_budget": result.over_budget,
            },
            ensure_ascii=False,
        )
    )
    return EXIT_OK


def _cmd_retrieve(args: argparse.Namespace) -> int:
    config = pipeline.load_config(args.config)
    dataset, _, _, bank = pipeline.build_components(config)
    matches = [record for record in dataset.records if record.id == args.id]
    if not matches:
        raise ValueError(f"no record with id {args.id!r} in {config.dataset_path}")
    for inp, out in retrieve(bank, matches[0], args.k):
        print(json.dumps({"input": inp, "output": out}, ensure_ascii=False))
    return EXIT_OK


def _cmd_schedule_preview(args: argparse.Namespace) -> int:
    schedule = make_schedule(
        args.pattern,
        args.iterations,
        args.stages,
        args.tau_final,
        args.k_start,
        tau_start=args.tau_start,
        lam=args.lam,
    )
    print(f"pattern={schedule.pattern} T={schedule.total_iterations}")
    for stage in range(schedule.num_stages):
        start, end = schedule.stage_range(stage)
        tau, k = schedule.stage_values(stage)
        print(f"stage {stage}: t=[{start},{end}) tau={tau:.4f} k={k}")
    return EXIT_OK


def _resolve_report_path(path_arg: str, last: bool) -> Path:
    path = Path(path_arg)
    if path.is_dir():
        stage_files = sorted((path / "stages").glob("stage_*.jsonl"))
        if not stage_files:
            stage_files = sorted(path.glob("stage_*.jsonl"))
        if not stage_files:
            raise ValueError(f"{path}: no stage_*.jsonl files found")
        return stage_files[-1] if last else stage_files[0]
    return path


def _cmd_report(args: argparse.Namespace) -> int:
    baseline_path = _resolve_report_path(args.baseline, last=False)
    final_path = _resolve_report_path(args.final, last=True)
    table = accounting.load_price_table(args.prices)
    report = accounting.build_report(
        accounting.measure(baseline_path),
        accounting.measure(baseline_path, field="completion"),
        accounting.measure(final_path),
        accounting.measure(final_path, field="completion"),
        table,
        args.model,
    )
    if args.json:
        safe = dict(report)
        if safe["compression_ratio"] == float("inf"):
            safe["compression_ratio"] = None
        print(json.dumps(safe, ensure_ascii=False))
    else:
        print(accounting.format_report(report))
    return EXIT_OK


def _cmd_build_inference(args: argparse.Namespace) -> int:
    config = pipeline.load_config(args.config)
    if args.dataset:
        from .records import load_dataset

        dataset = load_dataset(args.dataset)
        _, schedule, model, _ = pipeline.build_components(config)
    else:
        dataset, schedule, model, _ = pipeline.build_components(config)
    lines = []
    for record in dataset.records:
        template_text = ""
        if schedule.tau_final > 0.0:
            result = compress(
                CompressionRequest(
                    section_texts={
                        "instruction": record.instruction,
                        "document": record.document,
                    },
                    tau=schedule.tau_final,
                    preserve_patterns=config.preserve_patterns,
                ),
                model,
            )
            template_text = pipeline._combine_sections(
                result.section_texts, config.layout
            )
        prompt = pipeline.build_inference_prompt(record, template_text, config.layout)
        lines.append(json.dumps({"id": record.id, "prompt": prompt}, ensure_ascii=False))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write("\n".join(lines) + ("\n" if lines else ""))
    else:
        for line in lines:
            print(line)
    return EXIT_OK


_HANDLERS = {
    "preprocess": _cmd_preprocess,
    "compress": _cmd_compress,
    "retrieve": _cmd_retrieve,
    "schedule-preview": _cmd_schedule_preview,
    "report": _cmd_report,
    "build-inference": _cmd_build_inference,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _HANDLERS[args.command](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (RecordParseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
