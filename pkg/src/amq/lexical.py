"""Stage-1 retrieval: fuzzy matching of an input term against dictionary names.

The metric is the normalized Levenshtein ratio
``1 - distance(norm(a), norm(b)) / max(len(norm(a)), len(norm(b)))``
over the shared name normalization, so a score of 1.0 means the
normalized strings are identical.
"""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import Dictionary
from .textnorm import normalize


class LexicalError(ValueError):
    """Query or candidate string unusable for matching."""


@dataclass(frozen=True)
class LexicalMatch:
    code: int
    score: float
    normalized_query: str
    normalized_name: str


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance, two-row dynamic programming."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
        prev = cur
    return prev[-1]


def lexical_ratio(a: str, b: str) -> float:
    """Similarity in [0, 1] between two term strings after normalization."""
    na, nb = normalize(a), normalize(b)
    if not na or not nb:
        raise LexicalError(f"string empty after normalization: {(a if not na else b)!r}")
    if na == nb:
        return 1.0
    return 1.0 - levenshtein(na, nb) / max(len(na), len(nb))


def best_lexical(query: str, dictionary: Dictionary) -> LexicalMatch | None:
    """Highest-scoring dictionary name for ``query``; ties go to the lowest code.

    Returns None only for an empty dictionary. The caller decides whether
    the score clears its cutoff.
    """
    nq = normalize(query)
    if not nq:
        raise LexicalError(f"query empty after normalization: {query!r}")
    exact = dictionary.by_normalized_name(nq)
    if exact is not None:
        # normalized names are unique, so an exact hit is the unique argmax
        return LexicalMatch(code=exact.code, score=1.0, normalized_query=nq, normalized_name=nq)
    best: LexicalMatch | None = None
    for term in dictionary:  # code order, so first win is the lowest code
        nn = normalize(term.name)
        score = 1.0 - levenshtein(nq, nn) / max(len(nq), len(nn))
        if best is None or score > best.score:
            best = LexicalMatch(
                code=term.code, score=score, normalized_query=nq, normalized_name=nn
            )
    return best
