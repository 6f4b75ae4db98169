"""Train on a preprocessing run and evaluate query-only inference."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .evaluate import evaluate
from .manifests import read_test_records
from .model import ModelConfig, load_model
from .training import TrainingConfig, run_progressive


class _Generator:
    def __init__(self, model, max_new_tokens: int):
        self._model = model
        self._max_new_tokens = max_new_tokens

    def generate(self, prompt: str) -> str:
        return self._model.generate(prompt, self._max_new_tokens)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stagetrain", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="progressive fine-tuning over stage manifests")
    p.add_argument("run_dir", help="preprocessing run directory (contains manifests/)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rank", type=int, default=32, help="adapter rank")
    p.add_argument("--lr", type=float, default=3e-3)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--epochs-per-stage", type=float, default=None)
    p.add_argument(
        "--max-seq-len", type=int, default=None,
        help="context window override for long stage-0 prompts",
    )

    p = sub.add_parser("eval", help="query-only evaluation of a trained checkpoint")
    p.add_argument("model", help="model.pt written by train")
    p.add_argument("--test", required=True, help="raw test dataset JSONL")
    p.add_argument("--metric", choices=("exact_match", "bleu"), default="exact_match")
    p.add_argument("--max-new-tokens", type=int, default=16)
    p.add_argument("--out", help="metrics path (default: metrics.json beside the model)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "train":
            model_config = ModelConfig()
            if args.max_seq_len is not None:
                model_config = replace(model_config, max_seq_len=args.max_seq_len)
            config = TrainingConfig(
                adapter_rank=args.rank,
                learning_rate=args.lr,
                batch_size=args.batch_size,
                seed=args.seed,
                epochs_per_stage=args.epochs_per_stage,
                model=model_config,
            )
            result = run_progressive(args.run_dir, config, args.out)
            print(
                f"trained {len(result.losses)} steps over "
                f"{len(result.stage_starts)} stages; "
                f"first loss {result.losses[0]:.4f}, last loss {result.losses[-1]:.4f}"
            )
            print(f"checkpoint: {result.model_path}")
            return 0
        model = load_model(args.model)
        records = read_test_records(args.test)
        score = evaluate(_Generator(model, args.max_new_tokens), records, args.metric)
        metrics = {"metric": args.metric, "score": score, "n_test": len(records)}
        print(json.dumps(metrics))
        out = Path(args.out) if args.out else Path(args.model).parent / "metrics.json"
        out.write_text(json.dumps(metrics, indent=2) + "\n")
        return 0
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
