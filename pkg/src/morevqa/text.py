"""Text normalization and token matching used across tools and scoring.

Normalization is lowercase, punctuation stripped, whitespace collapsed.
"""

from __future__ import annotations

import re

_PUNCT = re.compile(r"[^\w\s]")
_WS = re.compile(r"\s+")


def normalize_text(text: str) -> str:
    return _WS.sub(" ", _PUNCT.sub(" ", text.lower())).strip()


def tokens(text: str) -> list[str]:
    norm = normalize_text(text)
    return norm.split(" ") if norm else []


def token_set(text: str) -> set[str]:
    return set(tokens(text))


def whole_word_contains(phrase: str, needle: str) -> bool:
    """True when the normalized phrase contains the normalized needle as a
    whole-word substring."""
    hay = f" {normalize_text(phrase)} "
    sub = f" {normalize_text(needle)} "
    return sub.strip() != "" and sub in hay


def jaccard(a: set[str], b: set[str]) -> float:
    if not a and not b:
        return 0.0
    union = a | b
    if not union:
        return 0.0
    return len(a & b) / len(union)


def token_overlap(candidate: str, context_tokens: set[str]) -> int:
    """Number of the candidate's distinct tokens present in the context."""
    return len(token_set(candidate) & context_tokens)
