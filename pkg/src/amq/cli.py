"""Batch command-line frontend.

Subcommands: ``validate`` (corpus checks), ``query`` (single retrieval),
``eval`` (full evaluation run with report artifacts), ``synth`` (fixture
embeddings), ``serve`` (HTTP service).

Exit codes: 0 success, 1 operational error, 2 validation findings.
All artifact and stdout bytes are pure functions of the inputs; logs go
to stderr.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import corpus, embeddings, evaluation
from .pipeline import (
    PipelineConfig,
    PipelineError,
    QueryInput,
    export_csv,
    export_json,
    load_probe_table,
    run_query,
)

logger = logging.getLogger("amq")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FINDINGS = 2


class FlagError(ValueError):
    """Invalid flag combination or value, reported before any I/O."""


def parse_grid(text: str) -> list[float]:
    """``a:b:step`` inclusive of both ends; step must divide the range."""
    parts = text.split(":")
    if len(parts) != 3:
        raise FlagError(f"grid must be 'a:b:step', got {text!r}")
    try:
        a, b, step = (float(p) for p in parts)
    except ValueError:
        raise FlagError(f"non-numeric grid component in {text!r}") from None
    if step <= 0:
        raise FlagError(f"grid step must be positive, got {step}")
    if b < a:
        raise FlagError(f"grid upper end {b} below lower end {a}")
    n = round((b - a) / step)
    if abs(a + n * step - b) > 1e-9:
        raise FlagError(f"grid step {step} does not divide the range [{a}, {b}]")
    return [round(a + i * step, 10) for i in range(n + 1)]


def _parse_threshold(text: str) -> float | None:
    if text == "auto":
        return None
    try:
        value = float(text)
    except ValueError:
        raise FlagError(f"threshold must be 'auto' or a number, got {text!r}") from None
    if not -1.0 <= value <= 1.0:
        raise FlagError(f"threshold must be in [-1, 1], got {value}")
    return value


def _env(name: str) -> str | None:
    return os.environ.get(f"AMQ_{name}")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--lexical-cutoff", type=float, default=0.90)
    parser.add_argument("--semantic-top-k", type=int, default=3)
    parser.add_argument("--semantic-margin", type=float, default=0.02)
    parser.add_argument("--knee-sensitivity", type=float, default=1.0)
    parser.add_argument("--knee-scope", choices=("full", "relevant"), default="full")
    parser.add_argument(
        "--score-against", choices=("probe", "max"), default="probe",
        help="score terms against the composite probe or the max over probe and seeds",
    )
    parser.add_argument(
        "--no-include-seeds", action="store_true",
        help="do not force matched seed terms into the retained set",
    )


def _config_from_args(args: argparse.Namespace, manual_threshold: float | None = None) -> PipelineConfig:
    try:
        return PipelineConfig(
            lexical_cutoff=args.lexical_cutoff,
            semantic_top_k=args.semantic_top_k,
            semantic_margin=args.semantic_margin,
            knee_sensitivity=args.knee_sensitivity,
            knee_scope=args.knee_scope,
            manual_threshold=manual_threshold,
            include_matched_seeds=not args.no_include_seeds,
            score_against=args.score_against,
        )
    except ValueError as exc:
        raise FlagError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="amq", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="check a dictionary and gold set for findings")
    p_validate.add_argument("--dict", dest="dict_path", required=True)
    p_validate.add_argument("--gold", dest="gold_path", required=True)
    p_validate.add_argument("--lexical-cutoff", type=float, default=0.90)

    p_query = sub.add_parser("query", help="run one query and print the retained terms")
    p_query.add_argument("--dict", dest="dict_path", required=True)
    p_query.add_argument("--embeddings", dest="embeddings_path", required=True)
    p_query.add_argument("terms", nargs="+", metavar="TERM")
    p_query.add_argument("--threshold", default="auto", help="'auto' or a value in [-1, 1]")
    p_query.add_argument("--format", choices=("csv", "json"), default="csv")
    p_query.add_argument("--probes", help="TSV side-table of probe vectors for free-text terms")
    _add_config_flags(p_query)

    p_eval = sub.add_parser("eval", help="evaluate against a gold set and write report artifacts")
    p_eval.add_argument("--dict", dest="dict_path", required=True)
    p_eval.add_argument("--embeddings", dest="embeddings_path", required=True)
    p_eval.add_argument("--gold", dest="gold_path", required=True)
    p_eval.add_argument("--out", dest="out_dir", required=True)
    p_eval.add_argument("--grid", default=None, help="cutoff grid 'a:b:step' (default 0.5:0.9:0.05)")
    p_eval.add_argument("--narrow-only", action="store_true",
                        help="also evaluate the narrow-scope-only subgroup")
    p_eval.add_argument("--probes", help="TSV side-table of probe vectors for free-text terms")
    _add_config_flags(p_eval)

    p_synth = sub.add_parser("synth", help="generate deterministic fixture embeddings")
    p_synth.add_argument("--dict", dest="dict_path", required=True)
    p_synth.add_argument("--dim", type=int, required=True)
    p_synth.add_argument("--seed", type=int, required=True)
    p_synth.add_argument("--out", dest="out_path", required=True)

    p_serve = sub.add_parser("serve", help="run the review service")
    p_serve.add_argument("--dict", dest="dict_path", default=_env("DICT"))
    p_serve.add_argument("--embeddings", dest="embeddings_path", default=_env("EMBEDDINGS"))
    p_serve.add_argument("--data-dir", dest="data_dir", default=_env("DATA_DIR"))
    p_serve.add_argument("--addr", default=_env("ADDR") or "127.0.0.1:8000")
    p_serve.add_argument("--probes", default=_env("PROBES"),
                         help="TSV side-table of probe vectors for free-text terms")
    p_serve.add_argument("--ui-dir", dest="ui_dir", default=_env("UI_DIR"),
                         help="directory of built UI files to serve at /")
    return parser


def cmd_validate(args: argparse.Namespace) -> int:
    dictionary = corpus.load_dictionary(args.dict_path)
    gold = corpus.load_gold_set(args.gold_path, dictionary)
    findings = 0

    for query in sorted(gold, key=lambda q: q.query_id):
        for term, is_valid in corpus.validate_inputs(query, dictionary, args.lexical_cutoff):
            if not is_valid:
                print(f"non-PT input: {query.query_id}: {term!r}")
                findings += 1
    for query_id, code in corpus.unreachable_gold_terms(gold, dictionary):
        print(f"unreachable gold term: {query_id}: {code}")
        findings += 1

    print(f"{findings} findings")
    return EXIT_FINDINGS if findings else EXIT_OK


def cmd_query(args: argparse.Namespace) -> int:
    manual = _parse_threshold(args.threshold)
    config = _config_from_args(args, manual_threshold=manual)
    dictionary = corpus.load_dictionary(args.dict_path)
    store = embeddings.load_embeddings(args.embeddings_path, dictionary)
    provider = load_probe_table(args.probes) if args.probes else None
    result = run_query(QueryInput(terms=tuple(args.terms), config=config),
                       dictionary, store, provider)
    if args.format == "json":
        sys.stdout.write(export_json(args.terms, result))
    else:
        sys.stdout.write(export_csv(result))
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    grid = parse_grid(args.grid) if args.grid else evaluation.default_grid()
    config = _config_from_args(args)
    dictionary = corpus.load_dictionary(args.dict_path)
    store = embeddings.load_embeddings(args.embeddings_path, dictionary)
    gold = corpus.load_gold_set(args.gold_path, dictionary)
    provider = load_probe_table(args.probes) if args.probes else None

    results = evaluation.run_gold_queries(dictionary, store, gold, config, provider)
    reports = [evaluation.build_report(results, gold, dictionary, grid)]
    if args.narrow_only:
        narrow_gold, dropped = evaluation.narrow_only(gold)
        if not narrow_gold:
            raise PipelineError("eval", "no queries with narrow gold terms")
        reports.append(
            evaluation.build_report(
                results, narrow_gold, dictionary, grid, label="narrow", dropped_queries=dropped
            )
        )

    written: list[Path] = []
    try:
        written = evaluation.emit_reports(reports, args.out_dir)
    except Exception:
        for path in written:
            path.unlink(missing_ok=True)
        raise

    for report in reports:
        title = "narrow-only" if report.label else "narrow+broad"
        print(f"== {title} ({len(report.gold)} queries) ==")
        print(f"{'cutoff':>6}  {'precision':>17}  {'recall':>17}  {'f1':>17}")
        for s in report.summaries:
            cells = [
                f"{st.mean:.3f} +/- {st.sd:.3f}" for st in (s.precision, s.recall, s.f1)
            ]
            print(f"{s.cutoff:>6g}  {cells[0]:>17}  {cells[1]:>17}  {cells[2]:>17}")
        a = report.auto_agg
        print(
            f"auto threshold: {a.threshold_mean:.3f} +/- {a.threshold_sd:.3f}  "
            f"p={a.precision_mean:.3f} r={a.recall_mean:.3f} f1={a.f1_mean:.3f}"
        )
    print(f"wrote {len(written)} artifacts to {args.out_dir}")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    if args.dim < 2:
        raise FlagError(f"--dim must be >= 2, got {args.dim}")
    dictionary = corpus.load_dictionary(args.dict_path)
    store = embeddings.synth_embeddings(dictionary, args.dim, args.seed)
    embeddings.save_embeddings(store, args.out_path)
    print(f"wrote {len(store)} vectors (dim {args.dim}) to {args.out_path}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    for flag, value in (("--dict", args.dict_path), ("--embeddings", args.embeddings_path),
                        ("--data-dir", args.data_dir)):
        if not value:
            raise FlagError(f"{flag} is required (or set AMQ_{flag[2:].upper().replace('-', '_')})")
    host, _, port_text = args.addr.rpartition(":")
    if not host or not port_text.isdigit():
        raise FlagError(f"--addr must be host:port, got {args.addr!r}")

    import uvicorn

    from .service import create_app

    dictionary = corpus.load_dictionary(args.dict_path)
    store = embeddings.load_embeddings(args.embeddings_path, dictionary)
    provider = load_probe_table(args.probes) if args.probes else None
    ui_dir = Path(args.ui_dir) if args.ui_dir else None
    app = create_app(dictionary, store, Path(args.data_dir), provider=provider, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=int(port_text), log_level="info")
    return EXIT_OK


_COMMANDS = {
    "validate": cmd_validate,
    "query": cmd_query,
    "eval": cmd_eval,
    "synth": cmd_synth,
    "serve": cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (FlagError, corpus.CorpusError, embeddings.EmbeddingError,
            embeddings.EmbeddingFormatError, PipelineError,
            evaluation.EvaluationError, OSError, ValueError) as exc:
        print(f"amq: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
