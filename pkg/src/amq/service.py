"""HTTP facade: query execution, persisted review sessions, dictionary
search, and asynchronous evaluation runs.

One JSON document per session or run, written atomically under the data
directory; the persisted record is the source of truth and survives
restarts. All errors use ``{"error": {"code": ..., "message": ...}}``.
"""

from __future__ import annotations

import json
import os
import secrets
import tempfile
import threading
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Literal

from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict

from . import evaluation
from .corpus import CorpusError, Dictionary, load_gold_set
from .embeddings import EmbeddingStore
from .lexical import LexicalError, best_lexical, lexical_ratio
from .pipeline import (
    PipelineConfig,
    PipelineError,
    ProbeProvider,
    QueryInput,
    RetrievalResult,
    apply_threshold,
    export_csv,
    export_json,
    result_from_dict,
    result_to_dict,
    run_query,
)
from .textnorm import normalize

DECISION_STATES = ("included", "excluded", "undecided")


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


def _error_response(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(
        status_code=status, content={"error": {"code": code, "message": message}}
    )


class JsonDocStore:
    """Atomic one-file-per-document persistence with per-document locks."""

    def __init__(self, root: Path):
        self.root = root
        self.root.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = defaultdict(threading.Lock)
        self._guard = threading.Lock()

    def lock(self, doc_id: str) -> threading.Lock:
        with self._guard:
            return self._locks[doc_id]

    def _path(self, doc_id: str) -> Path:
        if not doc_id or any(ch in doc_id for ch in "/\\."):
            raise ApiError(404, "not_found", f"unknown id {doc_id!r}")
        return self.root / f"{doc_id}.json"

    def exists(self, doc_id: str) -> bool:
        return self._path(doc_id).is_file()

    def load(self, doc_id: str) -> dict:
        path = self._path(doc_id)
        if not path.is_file():
            raise ApiError(404, "not_found", f"unknown id {doc_id!r}")
        return json.loads(path.read_text(encoding="utf-8"))

    def save(self, doc_id: str, doc: dict) -> None:
        path = self._path(doc_id)
        fd, tmp = tempfile.mkstemp(dir=self.root, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(doc, fh, indent=2)
            os.replace(tmp, path)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)


def _now_after(previous: str | None) -> str:
    now = datetime.now(timezone.utc)
    if previous is not None:
        prev = datetime.fromisoformat(previous)
        if now <= prev:
            now = prev + timedelta(microseconds=1)
    return now.isoformat()


def _new_session_id() -> str:
    return secrets.token_urlsafe(16)


# -- request bodies (strict: unknown fields rejected) -------------------------


class ConfigBody(BaseModel):
    model_config = ConfigDict(extra="forbid")
    lexical_cutoff: float | None = None
    semantic_top_k: int | None = None
    semantic_margin: float | None = None
    knee_sensitivity: float | None = None
    knee_scope: str | None = None
    manual_threshold: float | None = None
    include_matched_seeds: bool | None = None
    score_against: str | None = None

    def to_config(self) -> PipelineConfig:
        overrides = {k: v for k, v in self.model_dump().items() if v is not None}
        return PipelineConfig(**overrides)


class QueryBody(BaseModel):
    model_config = ConfigDict(extra="forbid")
    terms: list[str]
    config: ConfigBody | None = None


class ThresholdBody(BaseModel):
    model_config = ConfigDict(extra="forbid")
    threshold: float


class DecisionBody(BaseModel):
    model_config = ConfigDict(extra="forbid")
    state: Literal["included", "excluded", "undecided"]


class EvalRunBody(BaseModel):
    model_config = ConfigDict(extra="forbid")
    gold_path: str
    narrow_only: bool = False
    grid: list[float] | None = None


# -- session documents ---------------------------------------------------------


def _session_payload(doc: dict) -> dict:
    """The document is already the wire shape; echoed as-is."""
    return {"session": doc}


def _final_codes(result: RetrievalResult, decisions: dict[str, str]) -> list[int]:
    included = {int(c) for c, s in decisions.items() if s == "included"}
    excluded = {int(c) for c, s in decisions.items() if s == "excluded"}
    codes = (result.retained_codes() | included) - excluded
    return [t.code for t in result.all_scored if t.code in codes]  # rank order


def create_app(
    dictionary: Dictionary,
    store: EmbeddingStore,
    data_dir: Path,
    provider: ProbeProvider | None = None,
    ui_dir: Path | None = None,
) -> FastAPI:
    app = FastAPI(title="amq review service")
    sessions = JsonDocStore(Path(data_dir) / "sessions")
    runs = JsonDocStore(Path(data_dir) / "runs")
    eval_root = Path(data_dir) / "eval"
    executor = ThreadPoolExecutor(max_workers=2)

    @app.exception_handler(ApiError)
    async def handle_api_error(request: Request, exc: ApiError):
        return _error_response(exc.status, exc.code, exc.message)

    @app.exception_handler(RequestValidationError)
    async def handle_validation(request: Request, exc: RequestValidationError):
        parts = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"] if p != "body")
            if err["type"] == "extra_forbidden":
                parts.append(f"unknown field {loc!r}")
            else:
                parts.append(f"{loc}: {err['msg']}")
        return _error_response(400, "bad_request", "; ".join(parts) or "malformed body")

    @app.exception_handler(PipelineError)
    async def handle_pipeline_error(request: Request, exc: PipelineError):
        return _error_response(422, "pipeline_error", str(exc))

    def load_session(session_id: str) -> dict:
        return sessions.load(session_id)

    def session_result(doc: dict) -> RetrievalResult:
        return result_from_dict(doc["result"])

    @app.post("/api/queries", status_code=201)
    def create_query(body: QueryBody):
        if not body.terms or any(not normalize(t) for t in body.terms):
            raise ApiError(400, "bad_request", "terms must be a non-empty list of non-empty strings")
        try:
            config = body.config.to_config() if body.config else PipelineConfig()
        except ValueError as exc:
            raise ApiError(400, "bad_request", str(exc)) from None
        result = run_query(QueryInput(terms=tuple(body.terms), config=config),
                           dictionary, store, provider)
        session_id = _new_session_id()
        created = _now_after(None)
        doc = {
            "session_id": session_id,
            "status": "open",
            "created": created,
            "updated": created,
            "query_input": {"terms": list(body.terms), "config": config.to_dict()},
            "result": result_to_dict(result),
            "auto_threshold": result.decision.threshold,
            "active_threshold": result.decision.threshold,
            "decisions": {},
            "final_codes": None,
        }
        with sessions.lock(session_id):
            sessions.save(session_id, doc)
        return _session_payload(doc)

    @app.get("/api/sessions/{session_id}")
    def get_session(session_id: str):
        return _session_payload(load_session(session_id))

    @app.patch("/api/sessions/{session_id}/threshold")
    def patch_threshold(session_id: str, body: ThresholdBody):
        if not -1.0 <= body.threshold <= 1.0:
            raise ApiError(400, "bad_request", f"threshold must be in [-1, 1], got {body.threshold}")
        with sessions.lock(session_id):
            doc = load_session(session_id)
            if doc["status"] == "finalized":
                raise ApiError(409, "finalized", "session is finalized and immutable")
            rethresholded = apply_threshold(session_result(doc), body.threshold)
            doc["result"] = result_to_dict(rethresholded)
            doc["active_threshold"] = body.threshold
            doc["updated"] = _now_after(doc["updated"])
            sessions.save(session_id, doc)
        return _session_payload(doc)

    @app.put("/api/sessions/{session_id}/decisions/{code}")
    def put_decision(session_id: str, code: int, body: DecisionBody):
        with sessions.lock(session_id):
            doc = load_session(session_id)
            if doc["status"] == "finalized":
                raise ApiError(409, "finalized", "session is finalized and immutable")
            known = {t["code"] for t in doc["result"]["all_scored"]}
            if code not in known:
                raise ApiError(404, "not_found", f"code {code} not in this session's term list")
            if body.state == "undecided":
                doc["decisions"].pop(str(code), None)
            else:
                doc["decisions"][str(code)] = body.state
            doc["updated"] = _now_after(doc["updated"])
            sessions.save(session_id, doc)
        return _session_payload(doc)

    @app.post("/api/sessions/{session_id}/finalize")
    def finalize(session_id: str):
        with sessions.lock(session_id):
            doc = load_session(session_id)
            if doc["status"] == "finalized":
                raise ApiError(409, "finalized", "session is already finalized")
            result = session_result(doc)
            doc["final_codes"] = _final_codes(result, doc["decisions"])
            doc["status"] = "finalized"
            doc["updated"] = _now_after(doc["updated"])
            sessions.save(session_id, doc)
        return _session_payload(doc)

    @app.get("/api/sessions/{session_id}/export")
    def export_session(session_id: str, format: str = "json"):
        if format not in ("csv", "json"):
            raise ApiError(400, "bad_request", f"unknown format {format!r}")
        doc = load_session(session_id)
        result = session_result(doc)
        if doc["status"] == "finalized":
            codes = set(doc["final_codes"])
        else:
            codes = set(_final_codes(result, doc["decisions"]))
        terms = tuple(t for t in result.all_scored if t.code in codes)
        if format == "csv":
            return Response(content=export_csv(result, terms), media_type="text/csv")
        return Response(
            content=export_json(doc["query_input"]["terms"], result, terms),
            media_type="application/json",
        )

    @app.get("/api/dictionary/terms")
    def search_terms(q: str, limit: int = 20):
        if not normalize(q):
            raise ApiError(400, "bad_request", "q must be non-empty")
        if limit < 1:
            raise ApiError(400, "bad_request", f"limit must be >= 1, got {limit}")
        try:
            scored = [
                (term.code, term.name, lexical_ratio(q, term.name)) for term in dictionary
            ]
        except LexicalError as exc:
            raise ApiError(400, "bad_request", str(exc)) from None
        scored.sort(key=lambda row: (-row[2], row[0]))
        return {
            "terms": [
                {"code": code, "name": name, "score": score}
                for code, name, score in scored[:limit]
            ]
        }

    def _execute_eval_run(run_id: str, body: EvalRunBody) -> None:
        try:
            gold = load_gold_set(body.gold_path, dictionary)
            results = evaluation.run_gold_queries(dictionary, store, gold, provider=provider)
            reports = [evaluation.build_report(results, gold, dictionary, body.grid)]
            if body.narrow_only:
                narrow_gold, dropped = evaluation.narrow_only(gold)
                if narrow_gold:
                    reports.append(
                        evaluation.build_report(
                            results, narrow_gold, dictionary, body.grid,
                            label="narrow", dropped_queries=dropped,
                        )
                    )
            written = evaluation.emit_reports(reports, eval_root / run_id)
            status, artifacts, error = "done", [str(p) for p in written], None
        except Exception as exc:  # captured in the run record, not raised
            status, artifacts, error = "failed", [], f"{type(exc).__name__}: {exc}"
        with runs.lock(run_id):
            doc = runs.load(run_id)
            doc.update(status=status, artifacts=artifacts, error=error,
                       updated=_now_after(doc["updated"]))
            runs.save(run_id, doc)

    @app.post("/api/eval/runs", status_code=202)
    def create_eval_run(body: EvalRunBody):
        if not Path(body.gold_path).is_file():
            raise ApiError(400, "bad_request", f"gold path not readable: {body.gold_path}")
        if body.grid is not None and (not body.grid or sorted(body.grid) != body.grid):
            raise ApiError(400, "bad_request", "grid must be a non-empty ascending list")
        run_id = _new_session_id()
        created = _now_after(None)
        doc = {
            "run_id": run_id,
            "status": "running",
            "created": created,
            "updated": created,
            "gold_path": body.gold_path,
            "narrow_only": body.narrow_only,
            "grid": body.grid,
            "artifacts": [],
            "error": None,
        }
        with runs.lock(run_id):
            runs.save(run_id, doc)
        executor.submit(_execute_eval_run, run_id, body)
        return {"run": doc}

    @app.get("/api/eval/runs/{run_id}")
    def get_eval_run(run_id: str):
        return {"run": runs.load(run_id)}

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
