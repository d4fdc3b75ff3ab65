"""Shared term-name normalization.

Used for duplicate detection in dictionaries and for lexical matching,
so both always agree on what counts as "the same name".
"""

from __future__ import annotations

import re

# Anything outside letters/digits/space/hyphen is dropped before matching.
_STRIP_RE = re.compile(r"[^0-9a-z\- ]+")
_WS_RE = re.compile(r"\s+")


def normalize(text: str) -> str:
    """Lowercase, drop punctuation, collapse whitespace runs, trim.

    Hyphens are kept (common in clinical terms, e.g. "drug-induced").
    Dropping punctuation may merge or split runs, so whitespace is
    collapsed both before and after the strip.
    """
    spaced = _WS_RE.sub(" ", text.lower())
    stripped = _STRIP_RE.sub("", spaced)
    return _WS_RE.sub(" ", stripped).strip()
