"""Small text helpers shared by the corpus, mock backends and screening."""
from __future__ import annotations

import hashlib
import json
import re
from typing import Any, FrozenSet, List

_TOKEN_RE = re.compile(r"[a-z0-9]+(?:[-'][a-z0-9]+)*")
_SENTENCE_END_RE = re.compile(r"[.?!](?=\s|$)|\n")

STOPWORDS: FrozenSet[str] = frozenset(
    """
    a an and are as at be by for from has have in is it its of on or that the
    this to was were will with which who whom into than then there these those
    we you they our your their not no can may should would could also such
    """.split()
)


def tokens(text: str) -> List[str]:
    """Lowercased word tokens with stopwords removed (order and repeats kept)."""

    return [tok for tok in _TOKEN_RE.findall(text.lower()) if tok not in STOPWORDS]


def token_set(text: str) -> FrozenSet[str]:
    return frozenset(tokens(text))


def overlap(left: str, right: str) -> float:
    """Share of ``left``'s distinct tokens that also occur in ``right``."""

    lset = token_set(left)
    if not lset:
        return 0.0
    return len(lset & token_set(right)) / len(lset)


def jaccard(left: str, right: str) -> float:
    lset, rset = token_set(left), token_set(right)
    union = lset | rset
    if not union:
        return 1.0
    return len(lset & rset) / len(union)


def first_sentence(text: str) -> str:
    """Text up to the first terminator (``.?!`` before whitespace, or newline), trimmed."""

    stripped = text.lstrip()
    match = _SENTENCE_END_RE.search(stripped)
    if match is None:
        return stripped.strip()
    end = match.end() if match.group() != "\n" else match.start()
    return stripped[:end].strip()


def sentences(text: str) -> List[str]:
    parts: List[str] = []
    start = 0
    for match in _SENTENCE_END_RE.finditer(text):
        end = match.end() if match.group() != "\n" else match.start()
        piece = text[start:end].strip()
        if piece:
            parts.append(piece)
        start = match.end()
    tail = text[start:].strip()
    if tail:
        parts.append(tail)
    return parts


def canonical_json(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, ensure_ascii=True, separators=(",", ":"), default=str)


def stable_hash(*parts: Any) -> int:
    """Process-independent 64-bit hash of ``parts``."""

    digest = hashlib.sha256(canonical_json(list(parts)).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


__all__ = [
    "STOPWORDS",
    "tokens",
    "token_set",
    "overlap",
    "jaccard",
    "first_sentence",
    "sentences",
    "canonical_json",
    "stable_hash",
]
