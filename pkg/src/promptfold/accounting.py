"""Token statistics, compression ratios, and price-table cost estimates."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .records import iter_jsonl
from .tokenizer import count_tokens


@dataclass(frozen=True)
class TokenStats:
    total_prompt_tokens: int
    mean_prompt_tokens: float
    per_record: tuple[int, ...]


@dataclass(frozen=True)
class ModelPrice:
    input_per_1k: float
    output_per_1k: float
    currency: str = "USD"


@dataclass(frozen=True)
class PriceTable:
    models: dict[str, ModelPrice]


def measure(path: str | Path, field: str = "prompt") -> TokenStats:
    """Token counts over one JSONL field, prompts by default.

    Completions are excluded from prompt statistics; pass ``field=
    "completion"`` to count them instead.
    """
    counts: list[int] = []
    for lineno, obj in iter_jsonl(path):
        if not isinstance(obj, dict) or field not in obj:
            raise ValueError(f"{path}:{lineno}: missing field {field!r}")
        value = obj[field]
        if not isinstance(value, str):
            raise ValueError(f"{path}:{lineno}: field {field!r} must be a string")
        counts.append(count_tokens(value))
    total = sum(counts)
    return TokenStats(
        total_prompt_tokens=total,
        mean_prompt_tokens=total / len(counts) if counts else 0.0,
        per_record=tuple(counts),
    )


def compression_ratio(baseline: TokenStats, final: TokenStats) -> float:
    """Whole-prompt compression ratio 1/tau_all: baseline tokens over final tokens."""
    if final.total_prompt_tokens == 0:
        return math.inf
    return baseline.total_prompt_tokens / final.total_prompt_tokens


def format_ratio(ratio: float) -> str:
    if math.isinf(ratio):
        return "∞"
    return f"{ratio:.1f}x"


def load_price_table(path: str | Path) -> PriceTable:
    """Read a JSON map ``model -> {input_per_1k, output_per_1k, currency}``."""
    with open(path, encoding="utf-8") as handle:
        raw = json.load(handle)
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: price table must be a JSON object")
    models: dict[str, ModelPrice] = {}
    for name, entry in raw.items():
        if not isinstance(entry, dict):
            raise ValueError(f"{path}: entry for {name!r} must be an object")
        try:
            price = ModelPrice(
                input_per_1k=float(entry["input_per_1k"]),
                output_per_1k=float(entry["output_per_1k"]),
                currency=str(entry.get("currency", "USD")),
            )
        except KeyError as exc:
            raise ValueError(f"{path}: entry for {name!r} missing {exc}") from exc
        if price.input_per_1k < 0 or price.output_per_1k < 0:
            raise ValueError(f"{path}: prices for {name!r} must be >= 0")
        models[name] = price
    return PriceTable(models=models)


def estimate_cost(
    stats_in: TokenStats,
    stats_out: TokenStats,
    price_table: PriceTable,
    model_name: str,
) -> float:
    """Monetary cost: in_tokens/1000 * in_price + out_tokens/1000 * out_price."""
    if model_name not in price_table.models:
        known = ", ".join(sorted(price_table.models)) or "(none)"
        raise ValueError(f"unknown model {model_name!r}; known models: {known}")
    price = price_table.models[model_name]
    return (
        stats_in.total_prompt_tokens / 1000.0 * price.input_per_1k
        + stats_out.total_prompt_tokens / 1000.0 * price.output_per_1k
    )


def savings_fraction(baseline_cost: float, final_cost: float) -> float:
    if baseline_cost == 0:
        return 0.0
    return 1.0 - final_cost / baseline_cost


def build_report(
    baseline_prompts: TokenStats,
    baseline_completions: TokenStats,
    final_prompts: TokenStats,
    final_completions: TokenStats,
    price_table: PriceTable,
    model_name: str,
) -> dict:
    ratio = compression_ratio(baseline_prompts, final_prompts)
    baseline_cost = estimate_cost(
        baseline_prompts, baseline_completions, price_table, model_name
    )
    final_cost = estimate_cost(
        final_prompts, final_completions, price_table, model_name
    )
    currency = price_table.models[model_name].currency
    return {
        "model": model_name,
        "currency": currency,
        "baseline": {
            "input_tokens": baseline_prompts.total_prompt_tokens,
            "mean_input_tokens": baseline_prompts.mean_prompt_tokens,
            "output_tokens": baseline_completions.total_prompt_tokens,
            "cost": baseline_cost,
        },
        "final": {
            "input_tokens": final_prompts.total_prompt_tokens,
            "mean_input_tokens": final_prompts.mean_prompt_tokens,
            "output_tokens": final_completions.total_prompt_tokens,
            "cost": final_cost,
        },
        "compression_ratio": ratio,
        "compression_ratio_display": format_ratio(ratio),
        "savings_fraction": savings_fraction(baseline_cost, final_cost),
    }


def format_report(report: dict) -> str:
    baseline = report["baseline"]
    final = report["final"]
    lines = [
        f"Input tokens (baseline): {baseline['input_tokens']} "
        f"(mean {baseline['mean_input_tokens']:.1f})",
        f"Input tokens (final):    {final['input_tokens']} "
        f"(mean {final['mean_input_tokens']:.1f})",
        f"Compression ratio (1/tau_all): {report['compression_ratio_display']}",
        f"Cost ({report['model']}, {report['currency']}): "
        f"baseline {baseline['cost']:.6f}, final {final['cost']:.6f}",
        f"Savings: {report['savings_fraction'] * 100:.1f}%",
    ]
    return "\n".join(lines)
