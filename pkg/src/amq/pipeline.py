"""End-to-end query pipeline: seed matching, composite probe, full-dictionary
scoring, automated thresholding, ranked output.

Free-text inputs that fail the lexical stage need an embedding for the raw
string. There is no text-embedding model here; a :class:`ProbeProvider`
supplies those vectors instead, either from an in-memory mapping or from a
TSV side-table (``query_text<TAB>v1,v2,...``).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Protocol

import numpy as np

from .corpus import Dictionary
from .embeddings import EmbeddingError, EmbeddingStore, mean_composite, normalize
from .lexical import best_lexical
from .textnorm import normalize as norm_text
from .thresholds import (
    KneeResult,
    Partition2M,
    ThresholdDecision,
    ThresholdSource,
    auto_threshold,
)

MATCH_KINDS = ("lexical", "semantic")
SCORE_AGAINST = ("probe", "max")


class PipelineError(RuntimeError):
    """Failure inside a named pipeline stage."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass(frozen=True)
class PipelineConfig:
    """Tunable knobs; defaults reflect the documented behavior.

    ``score_against`` selects the per-term relevance score: cosine to the
    composite probe ("probe", default) or the max of that and the cosine
    to each matched seed vector ("max").
    """

    lexical_cutoff: float = 0.90
    semantic_top_k: int = 3
    semantic_margin: float = 0.02
    knee_sensitivity: float = 1.0
    knee_scope: str = "full"  # or "relevant": knee on the relevant cluster only
    manual_threshold: float | None = None
    include_matched_seeds: bool = True
    score_against: str = "probe"

    def __post_init__(self) -> None:
        if not 0.0 < self.lexical_cutoff <= 1.0:
            raise ValueError(f"lexical_cutoff must be in (0, 1], got {self.lexical_cutoff}")
        if self.semantic_top_k not in (1, 2, 3):
            raise ValueError(f"semantic_top_k must be 1, 2 or 3, got {self.semantic_top_k}")
        if self.semantic_margin < 0:
            raise ValueError(f"semantic_margin must be >= 0, got {self.semantic_margin}")
        if self.knee_sensitivity <= 0:
            raise ValueError(f"knee_sensitivity must be positive, got {self.knee_sensitivity}")
        if self.knee_scope not in ("full", "relevant"):
            raise ValueError(f"knee_scope must be 'full' or 'relevant', got {self.knee_scope!r}")
        if self.manual_threshold is not None and not -1.0 <= self.manual_threshold <= 1.0:
            raise ValueError(f"manual_threshold must be in [-1, 1], got {self.manual_threshold}")
        if self.score_against not in SCORE_AGAINST:
            raise ValueError(f"score_against must be one of {SCORE_AGAINST}, got {self.score_against!r}")

    def to_dict(self) -> dict:
        return {
            "lexical_cutoff": self.lexical_cutoff,
            "semantic_top_k": self.semantic_top_k,
            "semantic_margin": self.semantic_margin,
            "knee_sensitivity": self.knee_sensitivity,
            "knee_scope": self.knee_scope,
            "manual_threshold": self.manual_threshold,
            "include_matched_seeds": self.include_matched_seeds,
            "score_against": self.score_against,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class QueryInput:
    terms: tuple[str, ...]
    config: PipelineConfig = field(default_factory=PipelineConfig)

    def __post_init__(self) -> None:
        if not self.terms:
            raise ValueError("query needs at least one input term")
        object.__setattr__(self, "terms", tuple(self.terms))


class ProbeProvider(Protocol):
    """Supplies unit vectors for free-text strings outside the dictionary."""

    def probe_vector(self, text: str) -> np.ndarray | None: ...


class MappingProbeProvider:
    """Probe vectors from an in-memory {text: vector} table, keyed on the
    normalized string."""

    def __init__(self, table: dict[str, "np.ndarray | list[float]"]):
        self._table = {norm_text(k): normalize(v) for k, v in table.items()}

    def probe_vector(self, text: str) -> np.ndarray | None:
        return self._table.get(norm_text(text))


def load_probe_table(path: str | Path) -> MappingProbeProvider:
    """Read a ``query_text<TAB>v1,v2,...`` TSV side-table of probe vectors."""
    table: dict[str, list[float]] = {}
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'text<TAB>v1,v2,...'")
            try:
                values = [float(v) for v in parts[1].split(",")]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric vector component") from None
            table[parts[0]] = values
    return MappingProbeProvider(table)


@dataclass(frozen=True)
class MatchedSeed:
    input_term: str
    codes: tuple[int, ...]
    kind: str  # "lexical" or "semantic"


@dataclass(frozen=True)
class ScoredTerm:
    code: int
    name: str
    sim_best_pt: float
    rank: int
    retained: bool


@dataclass(frozen=True)
class RetrievalResult:
    matched_seeds: tuple[MatchedSeed, ...]
    probe_kind: str  # "single" or "composite"
    decision: ThresholdDecision
    all_scored: tuple[ScoredTerm, ...]
    config: PipelineConfig

    @property
    def retained(self) -> tuple[ScoredTerm, ...]:
        return tuple(t for t in self.all_scored if t.retained)

    def retained_codes(self) -> set[int]:
        return {t.code for t in self.all_scored if t.retained}

    def seed_codes(self) -> set[int]:
        return {c for seed in self.matched_seeds for c in seed.codes}


def match_term(
    term: str,
    dictionary: Dictionary,
    store: EmbeddingStore,
    config: PipelineConfig,
    provider: ProbeProvider | None = None,
) -> MatchedSeed:
    """Resolve one input term to 1..3 seed codes.

    A lexical hit at or above the cutoff short-circuits to that single
    term; otherwise the raw string is embedded (via the provider) and the
    top cosine candidate is kept along with up to two companions within
    ``semantic_margin`` of it.
    """
    if not norm_text(term):
        raise PipelineError("match", f"input term {term!r} is empty after normalization")
    if len(dictionary) == 0:
        raise PipelineError("match", "dictionary is empty")

    best = best_lexical(term, dictionary)
    if best is not None and best.score >= config.lexical_cutoff:
        return MatchedSeed(input_term=term, codes=(best.code,), kind="lexical")

    if provider is None:
        raise PipelineError(
            "match",
            f"no lexical match for {term!r} at cutoff {config.lexical_cutoff} "
            "and no probe provider configured",
        )
    probe = provider.probe_vector(term)
    if probe is None:
        raise PipelineError("match", f"no embedding available for input term {term!r}")
    if probe.shape != (store.dim,):
        raise PipelineError(
            "match", f"probe for {term!r} has dim {probe.shape[0]}, store has {store.dim}"
        )

    ranked = sorted(store.score_all(probe), key=lambda cs: (-cs[1], cs[0]))
    top_sim = ranked[0][1]
    codes = [
        code
        for code, sim in ranked[: config.semantic_top_k]
        if sim >= top_sim - config.semantic_margin
    ]
    return MatchedSeed(input_term=term, codes=tuple(codes), kind="semantic")


def build_probe(codes: list[int] | tuple[int, ...], store: EmbeddingStore) -> tuple[np.ndarray, str]:
    """Single code: its vector. Several: renormalized mean (composite).
    Duplicates collapse before averaging."""
    unique = sorted(set(codes))
    if not unique:
        raise PipelineError("probe", "no matched codes to build a probe from")
    try:
        if len(unique) == 1:
            return store.vector(unique[0]), "single"
        return mean_composite([store.vector(c) for c in unique]), "composite"
    except EmbeddingError as exc:
        raise PipelineError("probe", str(exc)) from exc


def run_query(
    query: QueryInput,
    dictionary: Dictionary,
    store: EmbeddingStore,
    provider: ProbeProvider | None = None,
) -> RetrievalResult:
    """Execute the full pipeline, deterministically.

    Every dictionary term is scored against the probe; the threshold comes
    from the manual override when set, else from the automated selection.
    Matched seed codes are forced into the retained set by default (a
    query's own defining term must not be filtered out).
    """
    config = query.config
    seeds = tuple(
        match_term(term, dictionary, store, config, provider) for term in query.terms
    )
    pooled = sorted({c for s in seeds for c in s.codes})
    probe, probe_kind = build_probe(pooled, store)

    sims = np.array([s for _, s in store.score_all(probe)])
    if config.score_against == "max":
        for code in pooled:
            sims = np.maximum(sims, np.clip(store.matrix @ store.vector(code), -1.0, 1.0))
    scores = dict(zip(store.codes, (float(s) for s in sims)))

    diag = auto_threshold(sims, config.knee_sensitivity, config.knee_scope)
    if config.manual_threshold is not None:
        decision = ThresholdDecision(
            threshold=config.manual_threshold,
            source=ThresholdSource.MANUAL,
            partition=diag.partition,
            knee=diag.knee,
        )
    else:
        decision = diag

    all_scored = _rank_terms(scores, dictionary, decision.threshold, seeds, config)
    return RetrievalResult(
        matched_seeds=seeds,
        probe_kind=probe_kind,
        decision=decision,
        all_scored=all_scored,
        config=config,
    )


def _rank_terms(
    scores: dict[int, float],
    dictionary: Dictionary,
    threshold: float,
    seeds: tuple[MatchedSeed, ...],
    config: PipelineConfig,
) -> tuple[ScoredTerm, ...]:
    forced = (
        {c for s in seeds for c in s.codes} if config.include_matched_seeds else set()
    )
    order = sorted(scores.items(), key=lambda cs: (-cs[1], cs[0]))
    terms = []
    for rank, (code, sim) in enumerate(order, start=1):
        entry = dictionary.get(code)
        terms.append(
            ScoredTerm(
                code=code,
                name=entry.name if entry else "",
                sim_best_pt=sim,
                rank=rank,
                retained=sim >= threshold or code in forced,
            )
        )
    return tuple(terms)


def apply_threshold(result: RetrievalResult, threshold: float) -> RetrievalResult:
    """Re-threshold an existing result without re-scoring.

    Scores, ranks and diagnostics are untouched; only the retained flags
    change, and the decision is marked manual. Unlike the initial query,
    an explicit threshold is applied literally: seed codes are not forced
    back in, so a threshold above the maximum score empties the list.
    """
    if not -1.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [-1, 1], got {threshold}")
    rescored = tuple(
        replace(t, retained=t.sim_best_pt >= threshold) for t in result.all_scored
    )
    decision = ThresholdDecision(
        threshold=threshold,
        source=ThresholdSource.MANUAL,
        partition=result.decision.partition,
        knee=result.decision.knee,
    )
    return replace(result, decision=decision, all_scored=rescored)


# -- serialization -----------------------------------------------------------


def _clamp_score(score: float) -> float:
    # exported relevance is presented in [0, 1]
    return max(score, 0.0)


def export_json(query_terms: list[str] | tuple[str, ...], result: RetrievalResult,
                terms: tuple[ScoredTerm, ...] | None = None) -> str:
    """Documented JSON export; ``terms`` defaults to the retained list."""
    rows = result.retained if terms is None else terms
    payload = {
        "query": list(query_terms),
        "matched_seeds": [
            {"input_term": s.input_term, "codes": list(s.codes), "kind": s.kind}
            for s in result.matched_seeds
        ],
        "decision": {
            "threshold": result.decision.threshold,
            "source": result.decision.source.value,
        },
        "terms": [
            {
                "code": t.code,
                "name": t.name,
                "score": _clamp_score(t.sim_best_pt),
                "rank": t.rank,
                "retained": t.retained,
            }
            for t in sorted(rows, key=lambda t: t.rank)
        ],
    }
    return json.dumps(payload, indent=2) + "\n"


def export_csv(result: RetrievalResult, terms: tuple[ScoredTerm, ...] | None = None) -> str:
    """Documented CSV export; ``terms`` defaults to the retained list."""
    rows = result.retained if terms is None else terms
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["rank", "code", "name", "score", "retained"])
    for t in sorted(rows, key=lambda t: t.rank):
        writer.writerow([t.rank, t.code, t.name, f"{_clamp_score(t.sim_best_pt):.6f}", t.retained])
    return buf.getvalue()


def result_to_dict(result: RetrievalResult) -> dict:
    """Full round-trippable representation (used for session persistence)."""
    d = result.decision
    return {
        "matched_seeds": [
            {"input_term": s.input_term, "codes": list(s.codes), "kind": s.kind}
            for s in result.matched_seeds
        ],
        "probe_kind": result.probe_kind,
        "decision": {
            "threshold": d.threshold,
            "source": d.source.value,
            "partition": {
                "boundary": d.partition.boundary,
                "relevant_centroid": d.partition.relevant_centroid,
                "other_centroid": d.partition.other_centroid,
                "relevant_count": d.partition.relevant_count,
                "sse": d.partition.sse,
            },
            "knee": {
                "knee_rank": d.knee.knee_rank,
                "knee_score": d.knee.knee_score,
                "sensitivity": d.knee.sensitivity,
            },
        },
        "all_scored": [
            {
                "code": t.code,
                "name": t.name,
                "sim_best_pt": t.sim_best_pt,
                "rank": t.rank,
                "retained": t.retained,
            }
            for t in result.all_scored
        ],
        "config": result.config.to_dict(),
    }


def result_from_dict(data: dict) -> RetrievalResult:
    d = data["decision"]
    decision = ThresholdDecision(
        threshold=d["threshold"],
        source=ThresholdSource(d["source"]),
        partition=Partition2M(**d["partition"]),
        knee=KneeResult(**d["knee"]),
    )
    return RetrievalResult(
        matched_seeds=tuple(
            MatchedSeed(
                input_term=s["input_term"], codes=tuple(s["codes"]), kind=s["kind"]
            )
            for s in data["matched_seeds"]
        ),
        probe_kind=data["probe_kind"],
        decision=decision,
        all_scored=tuple(ScoredTerm(**t) for t in data["all_scored"]),
        config=PipelineConfig.from_dict(data["config"]),
    )
