"""Term dictionary and gold query sets: loading, validation, serialization.

File formats:
  * dictionary TSV -- header ``code<TAB>name<TAB>group``, one term per line,
    UTF-8, ``group`` may be empty;
  * gold-set JSON -- array of ``{query_id, name, input_terms, gold_terms}``
    objects where each gold term is ``{"code": int, "scope": "narrow"|"broad"}``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .textnorm import normalize

logger = logging.getLogger(__name__)

SCOPES = ("narrow", "broad")


class CorpusError(ValueError):
    """Malformed dictionary or gold-set input."""


@dataclass(frozen=True)
class PreferredTerm:
    """One dictionary entry; ``group`` is an informational category label."""

    code: int
    name: str
    group: str = ""


@dataclass
class Dictionary:
    """Immutable-after-load term dictionary, iterated in code order."""

    terms: list[PreferredTerm]
    version_tag: str = ""
    _by_code: dict[int, PreferredTerm] = field(init=False, repr=False)
    _by_norm: dict[str, PreferredTerm] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.terms = sorted(self.terms, key=lambda t: t.code)
        self._by_code = {}
        self._by_norm = {}
        for term in self.terms:
            norm = normalize(term.name)
            if not norm:
                raise CorpusError(f"term {term.code} name empty after normalization")
            if term.code in self._by_code:
                raise CorpusError(f"duplicate code {term.code}")
            if norm in self._by_norm:
                raise CorpusError(f"duplicate normalized name {norm!r}")
            self._by_code[term.code] = term
            self._by_norm[norm] = term

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def __contains__(self, code: int) -> bool:
        return code in self._by_code

    def get(self, code: int) -> PreferredTerm | None:
        return self._by_code.get(code)

    def by_normalized_name(self, norm: str) -> PreferredTerm | None:
        """Exact lookup on the normalized name (unique by invariant)."""
        return self._by_norm.get(norm)

    def codes(self) -> list[int]:
        return [t.code for t in self.terms]


@dataclass(frozen=True)
class GoldTerm:
    code: int
    scope: str  # "narrow" or "broad"


@dataclass(frozen=True)
class GoldQuery:
    """A reference concept: the input expression(s) plus its gold term set."""

    query_id: str
    name: str
    input_terms: tuple[str, ...]
    gold_terms: tuple[GoldTerm, ...]

    def gold_codes(self) -> set[int]:
        return {g.code for g in self.gold_terms}

    def narrow_codes(self) -> set[int]:
        return {g.code for g in self.gold_terms if g.scope == "narrow"}


def load_dictionary(path: str | Path, version_tag: str = "") -> Dictionary:
    """Parse a dictionary TSV; rejects duplicate codes and duplicate
    normalized names with the offending line numbers."""
    path = Path(path)
    if not path.is_file():
        raise CorpusError(f"dictionary file not found: {path}")

    terms: list[PreferredTerm] = []
    code_lines: dict[int, int] = {}
    name_lines: dict[str, int] = {}
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header.split("\t") != ["code", "name", "group"]:
            raise CorpusError(f"{path}:1: expected header 'code\\tname\\tgroup'")
        for lineno, raw in enumerate(fh, start=2):
            line = raw.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise CorpusError(f"{path}:{lineno}: expected 3 columns, got {len(cols)}")
            code_text, name, group = cols
            try:
                code = int(code_text)
            except ValueError:
                raise CorpusError(f"{path}:{lineno}: non-integer code {code_text!r}") from None
            norm = normalize(name)
            if not norm:
                raise CorpusError(f"{path}:{lineno}: term name empty after normalization")
            if code in code_lines:
                raise CorpusError(
                    f"{path}:{lineno}: duplicate code {code} (first seen on line {code_lines[code]})"
                )
            if norm in name_lines:
                raise CorpusError(
                    f"{path}:{lineno}: duplicate normalized name {norm!r} "
                    f"(first seen on line {name_lines[norm]})"
                )
            code_lines[code] = lineno
            name_lines[norm] = lineno
            terms.append(PreferredTerm(code=code, name=name, group=group))
    return Dictionary(terms=terms, version_tag=version_tag)


def save_dictionary(dictionary: Dictionary, path: str | Path) -> None:
    """Write the dictionary back out as TSV (code order)."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write("code\tname\tgroup\n")
        for term in dictionary:
            fh.write(f"{term.code}\t{term.name}\t{term.group}\n")


def load_gold_set(path: str | Path, dictionary: Dictionary) -> list[GoldQuery]:
    """Parse a gold-set JSON file.

    Gold codes absent from the dictionary are kept (they cap achievable
    recall) but logged as unreachable; use :func:`unreachable_gold_terms`
    to enumerate them.
    """
    path = Path(path)
    if not path.is_file():
        raise CorpusError(f"gold-set file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{path}: malformed JSON: {exc}") from None
    if not isinstance(data, list):
        raise CorpusError(f"{path}: expected a JSON array of query objects")

    queries: list[GoldQuery] = []
    seen_ids: set[str] = set()
    for i, obj in enumerate(data):
        where = f"{path}: query #{i}"
        if not isinstance(obj, dict):
            raise CorpusError(f"{where}: expected an object")
        for key in ("query_id", "name", "input_terms", "gold_terms"):
            if key not in obj:
                raise CorpusError(f"{where}: missing required field {key!r}")
        query_id = str(obj["query_id"])
        if query_id in seen_ids:
            raise CorpusError(f"{where}: duplicate query_id {query_id!r}")
        seen_ids.add(query_id)

        raw_inputs = obj["input_terms"]
        if not isinstance(raw_inputs, list) or not raw_inputs:
            raise CorpusError(f"{where}: input_terms must be a non-empty list")
        input_terms = []
        for t in raw_inputs:
            if not isinstance(t, str) or not normalize(t):
                raise CorpusError(f"{where}: input term {t!r} empty after normalization")
            input_terms.append(t)

        gold_terms: list[GoldTerm] = []
        seen_codes: set[int] = set()
        for g in obj["gold_terms"]:
            if not isinstance(g, dict) or "code" not in g or "scope" not in g:
                raise CorpusError(f"{where}: gold term must have 'code' and 'scope'")
            try:
                code = int(g["code"])
            except (TypeError, ValueError):
                raise CorpusError(f"{where}: non-integer gold code {g['code']!r}") from None
            scope = str(g["scope"]).lower()
            if scope not in SCOPES:
                raise CorpusError(f"{where}: invalid scope {g['scope']!r} (expected narrow|broad)")
            if code in seen_codes:
                raise CorpusError(f"{where}: duplicate gold code {code}")
            seen_codes.add(code)
            gold_terms.append(GoldTerm(code=code, scope=scope))
            if code not in dictionary:
                logger.warning("%s: unreachable gold term %d (not in dictionary)", query_id, code)

        queries.append(
            GoldQuery(
                query_id=query_id,
                name=str(obj["name"]),
                input_terms=tuple(input_terms),
                gold_terms=tuple(gold_terms),
            )
        )
    return queries


def unreachable_gold_terms(
    queries: list[GoldQuery], dictionary: Dictionary
) -> list[tuple[str, int]]:
    """All (query_id, code) pairs whose gold code is absent from the dictionary."""
    found = []
    for q in queries:
        for g in q.gold_terms:
            if g.code not in dictionary:
                found.append((q.query_id, g.code))
    return found


def validate_inputs(
    query: GoldQuery, dictionary: Dictionary, lexical_cutoff: float
) -> list[tuple[str, bool]]:
    """Flag each input term by whether it lexically resolves to a dictionary
    term at the given cutoff (i.e. looks like a valid preferred term)."""
    from .lexical import best_lexical

    checks = []
    for term in query.input_terms:
        match = best_lexical(term, dictionary)
        checks.append((term, match is not None and match.score >= lexical_cutoff))
    return checks
