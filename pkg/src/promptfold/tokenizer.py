"""Deterministic word/punctuation tokenizer used for all token accounting."""

from __future__ import annotations

import re
from dataclasses import dataclass

# A token is either a maximal run of letters/digits/underscore or a single
# non-whitespace, non-word codepoint. Whitespace only separates.
_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


@dataclass(frozen=True)
class Token:
    """One token plus its byte span in the UTF-8 encoding of the source."""

    text: str
    start: int
    end: int


TokenSeq = list[Token]


def tokenize(text: str) -> TokenSeq:
    """Split ``text`` into tokens with non-overlapping, increasing byte spans.

    Locale-independent and byte-deterministic: no Unicode normalization is
    applied, identical input bytes always produce identical tokens.
    """
    tokens: TokenSeq = []
    byte_pos = 0
    char_pos = 0
    for match in _TOKEN_RE.finditer(text):
        byte_pos += len(text[char_pos : match.start()].encode("utf-8"))
        width = len(match.group().encode("utf-8"))
        tokens.append(Token(match.group(), byte_pos, byte_pos + width))
        byte_pos += width
        char_pos = match.end()
    return tokens


def token_texts(text: str) -> list[str]:
    return [match.group() for match in _TOKEN_RE.finditer(text)]


def count_tokens(text: str) -> int:
    return sum(1 for _ in _TOKEN_RE.finditer(text))
