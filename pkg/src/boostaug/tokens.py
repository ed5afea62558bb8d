from __future__ import annotations

import re
import unicodedata

_CHUNK = re.compile(r"\S+")


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P") or unicodedata.category(ch).startswith("S")


def token_spans(text: str) -> list[tuple[int, int]]:
    """Character spans of tokens: whitespace chunks with leading/trailing
    punctuation characters detached one per token."""
    spans = []
    for m in _CHUNK.finditer(text):
        lo, hi = m.start(), m.end()
        head = []
        while lo < hi and _is_punct(text[lo]):
            head.append((lo, lo + 1))
            lo += 1
        tail = []
        while hi > lo and _is_punct(text[hi - 1]):
            tail.append((hi - 1, hi))
            hi -= 1
        spans.extend(head)
        if lo < hi:
            spans.append((lo, hi))
        spans.extend(reversed(tail))
    return spans


def tokenize(text: str) -> list[str]:
    return [text[a:b] for a, b in token_spans(text)]


def detokenize(tokens: list[str]) -> str:
    return " ".join(tokens)
