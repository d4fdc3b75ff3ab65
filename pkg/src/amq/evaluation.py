"""Retrieval validation against gold query sets.

Per-query confusion metrics at fixed similarity cut-offs, a sweep over the
0.50-0.90 grid, the automated-threshold column, the per-query maximum-F1
column, the narrow-scope-only subgroup, and deterministic report artifacts
(summary CSV, comparison CSV, per-query detail CSV, plot-data JSON).

Zero-denominator conventions: precision is 0 when nothing is retrieved,
recall is 0 for an empty gold list, F1 is 0 when precision + recall is 0.
Metrics are averaged per query first, then summarized (the mean F1 is the
mean of per-query F1s, not the harmonic mean of the mean precision and
recall).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .corpus import Dictionary, GoldQuery, unreachable_gold_terms
from .embeddings import EmbeddingStore
from .pipeline import (
    PipelineConfig,
    ProbeProvider,
    QueryInput,
    RetrievalResult,
    apply_threshold,
    run_query,
)
from .thresholds import ThresholdError, ThresholdSource, pearson

METRICS = ("precision", "recall", "f1")


class EvaluationError(ValueError):
    """Inconsistent evaluation inputs."""


@dataclass(frozen=True)
class Confusion:
    tp: int
    retrieved: int
    gold: int


@dataclass(frozen=True)
class EvalRow:
    query_id: str
    cutoff: float
    tp: int
    retrieved: int
    gold: int
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class MetricStats:
    mean: float
    sd: float
    min: float
    max: float


@dataclass(frozen=True)
class SweepSummary:
    cutoff: float
    precision: MetricStats
    recall: MetricStats
    f1: MetricStats


@dataclass(frozen=True)
class ThresholdMetrics:
    """Per-query metrics at one chosen threshold (auto or max-F1)."""

    query_id: str
    threshold: float
    tp: int
    retrieved: int
    gold: int
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class AggregateColumn:
    """Mean +/- sd across queries of each metric plus the chosen threshold."""

    precision_mean: float
    precision_sd: float
    recall_mean: float
    recall_sd: float
    f1_mean: float
    f1_sd: float
    threshold_mean: float
    threshold_sd: float


def confusion(retrieved_codes: set[int], gold_codes: set[int]) -> Confusion:
    return Confusion(
        tp=len(retrieved_codes & gold_codes),
        retrieved=len(retrieved_codes),
        gold=len(gold_codes),
    )


def precision(c: Confusion) -> float:
    return c.tp / c.retrieved if c.retrieved else 0.0


def recall(c: Confusion) -> float:
    return c.tp / c.gold if c.gold else 0.0


def f1(p: float, r: float) -> float:
    return 2.0 * p * r / (p + r) if p + r else 0.0


def default_grid() -> list[float]:
    """Cut-offs 0.50 to 0.90, step 0.05."""
    return [i / 100 for i in range(50, 91, 5)]


def _row(query_id: str, cutoff: float, retrieved: set[int], gold: set[int]) -> EvalRow:
    c = confusion(retrieved, gold)
    p, r = precision(c), recall(c)
    return EvalRow(
        query_id=query_id,
        cutoff=cutoff,
        tp=c.tp,
        retrieved=c.retrieved,
        gold=c.gold,
        precision=p,
        recall=r,
        f1=f1(p, r),
    )


def sweep(
    results: dict[str, RetrievalResult],
    gold: list[GoldQuery],
    grid: list[float] | None = None,
) -> list[EvalRow]:
    """One row per (query, cutoff), re-thresholding without re-scoring.

    Unreachable gold codes stay in the recall denominator: they cap
    achievable recall rather than inflating it.
    """
    grid = default_grid() if grid is None else list(grid)
    if not grid:
        raise EvaluationError("empty cutoff grid")
    if sorted(grid) != grid:
        raise EvaluationError("cutoff grid must be ascending")
    rows: list[EvalRow] = []
    for query in sorted(gold, key=lambda q: q.query_id):
        if query.query_id not in results:
            raise EvaluationError(f"no retrieval result for gold query {query.query_id!r}")
        result = results[query.query_id]
        gold_codes = query.gold_codes()
        for cutoff in grid:
            retained = apply_threshold(result, cutoff).retained_codes()
            rows.append(_row(query.query_id, cutoff, retained, gold_codes))
    return rows


def _mean_sd(values: list[float]) -> tuple[float, float]:
    n = len(values)
    mean = sum(values) / n
    if n < 2:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var)


def _stats(values: list[float]) -> MetricStats:
    mean, sd = _mean_sd(values)
    return MetricStats(mean=mean, sd=sd, min=min(values), max=max(values))


def summarize(rows: list[EvalRow]) -> list[SweepSummary]:
    """Across-query mean/sd/min/max of each metric, one summary per cutoff."""
    if not rows:
        raise EvaluationError("no rows to summarize")
    by_cutoff: dict[float, list[EvalRow]] = {}
    for row in rows:
        by_cutoff.setdefault(row.cutoff, []).append(row)
    query_sets = {frozenset(r.query_id for r in group) for group in by_cutoff.values()}
    if len(query_sets) != 1:
        raise EvaluationError("rows do not cover identical query sets per cutoff")
    return [
        SweepSummary(
            cutoff=cutoff,
            precision=_stats([r.precision for r in group]),
            recall=_stats([r.recall for r in group]),
            f1=_stats([r.f1 for r in group]),
        )
        for cutoff, group in sorted(by_cutoff.items())
    ]


def max_f1_analysis(
    rows: list[EvalRow],
) -> tuple[list[ThresholdMetrics], AggregateColumn]:
    """Per query, the grid cutoff maximizing F1 (ties go to the lowest
    cutoff, favoring recall), plus the across-query aggregate."""
    by_query: dict[str, list[EvalRow]] = {}
    for row in rows:
        by_query.setdefault(row.query_id, []).append(row)
    per_query: list[ThresholdMetrics] = []
    for query_id in sorted(by_query):
        best = None
        for row in sorted(by_query[query_id], key=lambda r: r.cutoff):
            if best is None or row.f1 > best.f1:
                best = row
        per_query.append(
            ThresholdMetrics(
                query_id=query_id,
                threshold=best.cutoff,
                tp=best.tp,
                retrieved=best.retrieved,
                gold=best.gold,
                precision=best.precision,
                recall=best.recall,
                f1=best.f1,
            )
        )
    return per_query, _aggregate(per_query)


def auto_threshold_analysis(
    results: dict[str, RetrievalResult],
    gold: list[GoldQuery],
) -> tuple[list[ThresholdMetrics], AggregateColumn]:
    """Metrics at each query's automated threshold decision."""
    per_query: list[ThresholdMetrics] = []
    for query in sorted(gold, key=lambda q: q.query_id):
        if query.query_id not in results:
            raise EvaluationError(f"no retrieval result for gold query {query.query_id!r}")
        result = results[query.query_id]
        if result.decision.source is ThresholdSource.MANUAL:
            raise EvaluationError(
                f"query {query.query_id!r} was thresholded manually; "
                "the automated analysis needs auto-mode results"
            )
        c = confusion(result.retained_codes(), query.gold_codes())
        p, r = precision(c), recall(c)
        per_query.append(
            ThresholdMetrics(
                query_id=query.query_id,
                threshold=result.decision.threshold,
                tp=c.tp,
                retrieved=c.retrieved,
                gold=c.gold,
                precision=p,
                recall=r,
                f1=f1(p, r),
            )
        )
    return per_query, _aggregate(per_query)


def _aggregate(per_query: list[ThresholdMetrics]) -> AggregateColumn:
    if not per_query:
        raise EvaluationError("no per-query metrics to aggregate")
    pm, ps = _mean_sd([m.precision for m in per_query])
    rm, rs = _mean_sd([m.recall for m in per_query])
    fm, fs = _mean_sd([m.f1 for m in per_query])
    tm, ts = _mean_sd([m.threshold for m in per_query])
    return AggregateColumn(
        precision_mean=pm,
        precision_sd=ps,
        recall_mean=rm,
        recall_sd=rs,
        f1_mean=fm,
        f1_sd=fs,
        threshold_mean=tm,
        threshold_sd=ts,
    )


def narrow_only(gold: list[GoldQuery]) -> tuple[list[GoldQuery], list[str]]:
    """Gold side filtered to narrow-scope terms; queries with no narrow
    terms are dropped and their ids reported. Retrieval is reused as-is."""
    kept: list[GoldQuery] = []
    dropped: list[str] = []
    for query in gold:
        narrow = tuple(g for g in query.gold_terms if g.scope == "narrow")
        if narrow:
            kept.append(
                GoldQuery(
                    query_id=query.query_id,
                    name=query.name,
                    input_terms=query.input_terms,
                    gold_terms=narrow,
                )
            )
        else:
            dropped.append(query.query_id)
    return kept, dropped


def size_correlation(max_f1_values: list[float], gold_sizes: list[int]) -> float:
    """Pearson correlation of per-query max F1 against gold-set size."""
    return pearson(max_f1_values, [float(s) for s in gold_sizes])


# -- full evaluation run and report artifacts --------------------------------


@dataclass
class EvalReport:
    label: str  # "" for narrow+broad, "narrow" for the narrow-only subgroup
    grid: list[float]
    gold: list[GoldQuery]
    rows: list[EvalRow]
    summaries: list[SweepSummary]
    maxf1_rows: list[ThresholdMetrics]
    maxf1_agg: AggregateColumn
    auto_rows: list[ThresholdMetrics]
    auto_agg: AggregateColumn
    correlation: float | None
    correlation_note: str | None
    dropped_queries: list[str]
    unreachable: list[tuple[str, int]]


def run_gold_queries(
    dictionary: Dictionary,
    store: EmbeddingStore,
    gold: list[GoldQuery],
    config: PipelineConfig | None = None,
    provider: ProbeProvider | None = None,
) -> dict[str, RetrievalResult]:
    """Run the pipeline once per gold query, in auto-threshold mode."""
    config = config or PipelineConfig()
    if config.manual_threshold is not None:
        raise EvaluationError("evaluation requires auto-threshold mode (no manual_threshold)")
    results = {}
    for query in sorted(gold, key=lambda q: q.query_id):
        results[query.query_id] = run_query(
            QueryInput(terms=query.input_terms, config=config), dictionary, store, provider
        )
    return results


def build_report(
    results: dict[str, RetrievalResult],
    gold: list[GoldQuery],
    dictionary: Dictionary,
    grid: list[float] | None = None,
    label: str = "",
    dropped_queries: list[str] | None = None,
) -> EvalReport:
    grid = default_grid() if grid is None else list(grid)
    rows = sweep(results, gold, grid)
    summaries = summarize(rows)
    maxf1_rows, maxf1_agg = max_f1_analysis(rows)
    auto_rows, auto_agg = auto_threshold_analysis(results, gold)
    sizes = [len(q.gold_terms) for q in sorted(gold, key=lambda q: q.query_id)]
    try:
        corr = size_correlation([m.f1 for m in maxf1_rows], sizes)
        note = None
    except ThresholdError as exc:
        corr, note = None, f"no correlation computable: {exc}"
    return EvalReport(
        label=label,
        grid=grid,
        gold=sorted(gold, key=lambda q: q.query_id),
        rows=rows,
        summaries=summaries,
        maxf1_rows=maxf1_rows,
        maxf1_agg=maxf1_agg,
        auto_rows=auto_rows,
        auto_agg=auto_agg,
        correlation=corr,
        correlation_note=note,
        dropped_queries=dropped_queries or [],
        unreachable=unreachable_gold_terms(gold, dictionary),
    )


SWEEP_HEADER = (
    "cutoff,precision_mean,precision_sd,precision_min,precision_max,"
    "recall_mean,recall_sd,recall_min,recall_max,f1_mean,f1_sd,f1_min,f1_max"
)
COMPARISON_HEADER = "metric,auto_mean,auto_sd,maxf1_mean,maxf1_sd"


def _fmt(value: float) -> str:
    return f"{value:.4f}"


def _sweep_csv(report: EvalReport) -> str:
    lines = [SWEEP_HEADER]
    for s in report.summaries:
        cells = [f"{s.cutoff:g}"]
        for stats in (s.precision, s.recall, s.f1):
            cells += [_fmt(stats.mean), _fmt(stats.sd), _fmt(stats.min), _fmt(stats.max)]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _comparison_csv(report: EvalReport) -> str:
    a, m = report.auto_agg, report.maxf1_agg
    rows = [
        ("precision", a.precision_mean, a.precision_sd, m.precision_mean, m.precision_sd),
        ("recall", a.recall_mean, a.recall_sd, m.recall_mean, m.recall_sd),
        ("f1", a.f1_mean, a.f1_sd, m.f1_mean, m.f1_sd),
        ("threshold", a.threshold_mean, a.threshold_sd, m.threshold_mean, m.threshold_sd),
    ]
    lines = [COMPARISON_HEADER]
    for name, *vals in rows:
        lines.append(",".join([name] + [_fmt(v) for v in vals]))
    return "\n".join(lines) + "\n"


def _per_query_csv(report: EvalReport) -> str:
    unreachable_by_query: dict[str, list[int]] = {}
    for query_id, code in report.unreachable:
        unreachable_by_query.setdefault(query_id, []).append(code)
    maxf1 = {m.query_id: m for m in report.maxf1_rows}
    auto = {m.query_id: m for m in report.auto_rows}
    lines = [
        "query_id,name,gold_total,gold_unreachable,"
        "auto_threshold,auto_precision,auto_recall,auto_f1,"
        "maxf1_cutoff,maxf1_precision,maxf1_recall,maxf1_f1,unreachable_codes"
    ]
    for query in report.gold:
        a, m = auto[query.query_id], maxf1[query.query_id]
        codes = sorted(unreachable_by_query.get(query.query_id, []))
        name = query.name.replace(",", ";")
        lines.append(
            ",".join(
                [
                    query.query_id,
                    name,
                    str(len(query.gold_terms)),
                    str(len(codes)),
                    _fmt(a.threshold),
                    _fmt(a.precision),
                    _fmt(a.recall),
                    _fmt(a.f1),
                    f"{m.threshold:g}",
                    _fmt(m.precision),
                    _fmt(m.recall),
                    _fmt(m.f1),
                    ";".join(str(c) for c in codes),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def _plot_data(report: EvalReport) -> dict:
    series = {}
    for metric in METRICS:
        stats = [getattr(s, metric) for s in report.summaries]
        series[metric] = {
            "mean": [st.mean for st in stats],
            "sd": [st.sd for st in stats],
        }
    return {
        "grid": report.grid,
        "series": series,
        "max_f1_vs_gold_size": {
            "pearson_r": report.correlation,
            "note": report.correlation_note,
            "gold_sizes": [len(q.gold_terms) for q in report.gold],
            "max_f1": [m.f1 for m in report.maxf1_rows],
        },
        "queries": [q.query_id for q in report.gold],
        "dropped_queries": report.dropped_queries,
    }


def emit_reports(reports: list[EvalReport], out_dir: str | Path) -> list[Path]:
    """Write the artifact set for each report; byte-stable across reruns."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for report in reports:
        suffix = f"_{report.label}" if report.label else ""
        artifacts = {
            f"sweep{suffix}.csv": _sweep_csv(report),
            f"comparison{suffix}.csv": _comparison_csv(report),
            f"per_query{suffix}.csv": _per_query_csv(report),
            f"plot_data{suffix}.json": json.dumps(_plot_data(report), indent=2) + "\n",
        }
        for name, content in artifacts.items():
            path = out_dir / name
            path.write_text(content, encoding="utf-8")
            written.append(path)
    return written
