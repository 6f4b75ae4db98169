"""Extractive template compression driven by unigram self-information.

Compression keeps a per-section token budget of ``round_half_even(tau * N)``
tokens. Tokens covered by preserve patterns are kept first, the remaining
budget is filled with the highest self-information tokens (ties broken by
earlier position), and kept tokens are re-emitted in their original order
joined by single spaces. The same algorithm serves both the instruction and
the document section of a template; a sidecar file of precompressed text can
bypass it entirely for interoperability with external compressors.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .records import RecordParseError, iter_jsonl
from .tokenizer import Token, tokenize


@dataclass(frozen=True)
class ImportanceModel:
    """Add-one smoothed unigram statistics over a template corpus.

    ``counts`` holds smoothed counts (raw occurrences + 1) and ``total`` is
    the raw token total plus the vocabulary size, so every probability is in
    (0, 1) and every score is finite. Unseen tokens score with count 1.
    """

    counts: dict[str, int]
    total: int
    vocabulary: frozenset[str]
    smoothing: int = 1

    def score(self, token: str) -> float:
        """Self-information ``-log2 p(token)`` under the smoothed model."""
        return -math.log2(self.counts.get(token, self.smoothing) / self.total)


@dataclass(frozen=True)
class CompressionRequest:
    """Named section texts plus the requested keep rate ``tau`` in [0, 1]."""

    section_texts: dict[str, str]
    tau: float
    preserve_patterns: tuple[str, ...] = ()


@dataclass(frozen=True)
class SectionCompression:
    text: str
    kept_indices: tuple[int, ...]
    token_count: int


@dataclass(frozen=True)
class CompressionResult:
    sections: dict[str, SectionCompression]
    achieved_tau: float
    over_budget: bool

    @property
    def section_texts(self) -> dict[str, str]:
        return {name: section.text for name, section in self.sections.items()}


def train_importance_model(corpus: Iterable[str]) -> ImportanceModel:
    """Build unigram statistics over ``tokenize()`` of all corpus texts."""
    texts = list(corpus)
    if not texts:
        raise ValueError("importance model corpus is empty")
    raw: Counter[str] = Counter()
    for text in texts:
        raw.update(token.text for token in tokenize(text))
    if not raw:
        raise ValueError("importance model corpus contains no tokens")
    counts = {token: count + 1 for token, count in raw.items()}
    total = sum(raw.values()) + len(raw)
    return ImportanceModel(
        counts=counts, total=total, vocabulary=frozenset(raw)
    )


def _preserved_indices(
    text: str, tokens: list[Token], patterns: tuple[str, ...]
) -> set[int]:
    """Indices of tokens intersecting the first occurrence of each pattern."""
    if not patterns:
        return set()
    data = text.encode("utf-8")
    preserved: set[int] = set()
    for pattern in patterns:
        if not pattern:
            continue
        encoded = pattern.encode("utf-8")
        start = data.find(encoded)
        if start < 0:
            continue
        end = start + len(encoded)
        for index, token in enumerate(tokens):
            if token.start < end and token.end > start:
                preserved.add(index)
    return preserved


def _compress_section(
    text: str,
    tau: float,
    patterns: tuple[str, ...],
    model: ImportanceModel | None,
) -> tuple[SectionCompression, bool]:
    tokens = tokenize(text)
    n = len(tokens)
    budget = round(tau * n)  # round-half-even, unbiased
    preserved = _preserved_indices(text, tokens, patterns)
    over_budget = False
    if len(preserved) >= budget:
        kept = sorted(preserved)
        over_budget = len(preserved) > budget
    else:
        remaining = [i for i in range(n) if i not in preserved]
        slots = budget - len(preserved)
        if slots >= len(remaining):
            chosen = remaining
        else:
            if model is None:
                raise ValueError("an importance model is required to rank tokens")
            ranked = sorted(remaining, key=lambda i: (-model.score(tokens[i].text), i))
            chosen = ranked[:slots]
        kept = sorted(preserved.union(chosen))
    compressed = " ".join(tokens[i].text for i in kept)
    return SectionCompression(compressed, tuple(kept), n), over_budget


def compress(
    request: CompressionRequest, model: ImportanceModel | None
) -> CompressionResult:
    """Compress every section of ``request`` at the same rate.

    When the preserve patterns alone exceed a section's budget the patterns
    win: the section keeps them all and the result is flagged ``over_budget``
    instead of failing. ``achieved_tau`` is kept/original over all sections,
    with 0/0 defined as 1.
    """
    if not 0.0 <= request.tau <= 1.0:
        raise ValueError(f"tau must be in [0, 1], got {request.tau}")
    sections: dict[str, SectionCompression] = {}
    over_budget = False
    kept_total = 0
    original_total = 0
    for name, text in request.section_texts.items():
        section, section_over = _compress_section(
            text, request.tau, request.preserve_patterns, model
        )
        sections[name] = section
        over_budget = over_budget or section_over
        kept_total += len(section.kept_indices)
        original_total += section.token_count
    achieved = kept_total / original_total if original_total else 1.0
    return CompressionResult(
        sections=sections, achieved_tau=achieved, over_budget=over_budget
    )


def load_sidecar(path: str | Path) -> dict[tuple[str, int], str]:
    """Load a precompressed-template sidecar: JSONL ``{id, stage, template_text}``."""
    mapping: dict[tuple[str, int], str] = {}
    for lineno, obj in iter_jsonl(path):
        if not isinstance(obj, dict):
            raise RecordParseError(f"{path}:{lineno}: sidecar line must be an object")
        for key, kind in (("id", str), ("stage", int), ("template_text", str)):
            if key not in obj or not isinstance(obj[key], kind) or isinstance(obj[key], bool):
                raise RecordParseError(
                    f"{path}:{lineno}: sidecar line needs field {key!r}"
                )
        slot = (obj["id"], obj["stage"])
        if slot in mapping:
            raise RecordParseError(
                f"{path}:{lineno}: duplicate sidecar entry for {slot}"
            )
        mapping[slot] = obj["template_text"]
    return mapping
