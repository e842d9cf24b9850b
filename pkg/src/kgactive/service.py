"""HTTP annotation service: a live campaign session for a human oracle.

Exposes the pending query batch with display context and ranked candidate
shortlists, accepts labels idempotently, and advances the campaign in a
background thread when a batch completes (state reports a ``busy`` phase
while the models retrain).  All state mutations are serialized through one
lock; errors carry machine-readable codes.
"""
from __future__ import annotations

import threading
from pathlib import Path
from typing import Any

import numpy as np

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import ea_model
from .campaign import InteractiveSession
from .dataset import KnowledgeGraph
from .errors import (
    ConflictError,
    DatasetError,
    DomainError,
    KgactiveError,
    OneToOneViolationError,
    UnknownQueryError,
)


class ServiceBusyError(KgactiveError):
    """The campaign is retraining; mutations are rejected until it finishes."""


_ERROR_CODES: list[tuple[type[KgactiveError], str, int]] = [
    (UnknownQueryError, "unknown_query", 404),
    (OneToOneViolationError, "one_to_one_violation", 409),
    (ConflictError, "conflict", 409),
    (ServiceBusyError, "busy", 409),
    (DatasetError, "dataset", 400),
    (DomainError, "domain", 400),
    (KgactiveError, "internal", 400),
]


def _error_payload(exc: KgactiveError) -> tuple[int, dict]:
    for klass, code, status in _ERROR_CODES:
        if isinstance(exc, klass):
            return status, {"error": {"code": code, "message": str(exc)}}
    return 400, {"error": {"code": "internal", "message": str(exc)}}


class LabelBody(BaseModel):
    query: str
    outcome: str


class _UriIndex:
    def __init__(self, kg: KnowledgeGraph):
        self.kg = kg
        self.by_uri = kg.uri_to_id

    def id_of(self, uri: str) -> int:
        if uri not in self.by_uri:
            raise UnknownQueryError(f"unknown entity uri {uri!r}")
        return self.by_uri[uri]


class AnnotationService:
    """Bridges one InteractiveSession to the HTTP surface."""

    def __init__(self, session: InteractiveSession, candidate_count: int = 10):
        self.session = session
        self.candidate_count = candidate_count
        self.lock = threading.RLock()
        self.busy = False
        self.last_error: str | None = None
        self._threads: list[threading.Thread] = []
        self._index1 = _UriIndex(session.state.kg1)
        self._index2 = _UriIndex(session.state.kg2)
        # While a background advance mutates the session, reads are served
        # from these captures instead of the live objects.
        self._busy_view: dict = {}
        self._busy_consumed2: set[int] = set()

    # -- views ---------------------------------------------------------

    def _live_view(self, phase: str) -> dict:
        state = self.session.state
        last = state.log.records[-1] if state.log.records else None
        return {
            "phase": phase,
            "strategy": state.config.strategy,
            "iteration": state.iteration,
            "budget": state.config.budget,
            "spent": state.spent,
            "remaining": state.remaining,
            "batch_size": state.config.batch_size,
            "pool_size": len(state.store.pool),
            "labelled_pos": len(state.store.labelled_pos),
            "labelled_neg": len(state.store.labelled_neg),
            "pending": {
                "total": len(self.session.pending),
                "answered": len(self.session.answers),
            },
            "last_record": None
            if last is None
            else {k: v for k, v in last.items() if k not in ("scores", "wall_time")},
            "error": self.last_error,
        }

    def state_view(self) -> dict:
        with self.lock:
            if self.busy:
                return dict(self._busy_view, error=self.last_error)
            phase = "complete" if self.session.complete else "collecting"
            return self._live_view(phase)

    def _context_of(self, kg: KnowledgeGraph, entity_id: int) -> list[dict]:
        out = []
        for direction, pairs in (("out", kg.out_neighbors[entity_id]), ("in", kg.in_neighbors[entity_id])):
            for rel, other in sorted(pairs):
                out.append(
                    {
                        "relation": kg.relation_uris[rel],
                        "direction": direction,
                        "neighbor": {"id": int(other), "uri": kg.entity_uris[other]},
                    }
                )
        return out

    def _candidates_of(self, entity_id: int) -> list[dict]:
        state = self.session.state
        targets = sorted(set(range(state.store.n2)) - state.store.consumed2)
        if not targets:
            return []
        matrix = ea_model.score_matrix(state.model, [entity_id], targets)
        row = matrix.values[0]
        # Descending score; ascending id inside ties (stable sort on -score).
        order = np.argsort(-row, kind="stable")[: self.candidate_count]
        kg2 = state.kg2
        return [
            {
                "id": int(matrix.col_ids[i]),
                "uri": kg2.entity_uris[int(matrix.col_ids[i])],
                "score": float(row[i]),
            }
            for i in order
        ]

    def queries_view(self) -> list[dict]:
        with self.lock:
            if self.busy or not self.session.pending:
                return []
            state = self.session.state
            kg1 = state.kg1
            cards = []
            for e1 in self.session.pending:
                answered = None
                if e1 in self.session.answers:
                    counterpart = self.session.answers[e1]
                    answered = {
                        "outcome": "bachelor" if counterpart is None else "match",
                        "counterpart": None
                        if counterpart is None
                        else state.kg2.entity_uris[counterpart],
                    }
                cards.append(
                    {
                        "entity": {"id": int(e1), "uri": kg1.entity_uris[e1]},
                        "acquisition_score": self.session.pending_score_of(e1),
                        "context": self._context_of(kg1, e1),
                        "candidates": self._candidates_of(e1),
                        "answered": answered,
                    }
                )
            return cards

    def entity_context(self, uri: str, side: int | None) -> dict:
        with self.lock:
            sides = [side] if side in (1, 2) else [1, 2]
            for s in sides:
                index = self._index1 if s == 1 else self._index2
                if uri in index.by_uri:
                    eid = index.by_uri[uri]
                    return {
                        "entity": {"id": eid, "uri": uri, "side": s},
                        "context": self._context_of(index.kg, eid),
                    }
            raise UnknownQueryError(f"unknown entity uri {uri!r}")

    def search(self, side: int, q: str, limit: int = 20) -> list[dict]:
        if side not in (1, 2):
            raise DomainError(f"side must be 1 or 2, got {side}")
        with self.lock:
            index = self._index1 if side == 1 else self._index2
            if side != 2:
                consumed: set[int] = set()
            elif self.busy:
                consumed = self._busy_consumed2
            else:
                consumed = self.session.state.store.consumed2
            hits = []
            for uri in sorted(index.by_uri):
                if q in uri:
                    eid = index.by_uri[uri]
                    hits.append({"id": eid, "uri": uri, "consumed": eid in consumed})
                    if len(hits) >= limit:
                        break
            return hits

    # -- mutations -------------------------------------------------------

    def _enter_busy(self) -> None:
        """Captures read views, then marks the session as mutating."""
        view = self._live_view("busy")
        view["pending"] = {"total": 0, "answered": 0}
        self._busy_view = view
        self._busy_consumed2 = set(self.session.state.store.consumed2)
        self.busy = True

    def _advance_async(self, force: bool) -> None:
        def work() -> None:
            try:
                self.session.advance(force=force)
                err = None
            except KgactiveError as exc:
                err = str(exc)
            with self.lock:
                self.busy = False
                self.last_error = err

        thread = threading.Thread(target=work, name="campaign-advance", daemon=True)
        self._threads.append(thread)
        thread.start()

    def submit_label(self, query_uri: str, outcome: str) -> dict:
        with self.lock:
            if self.busy:
                raise ServiceBusyError("campaign is retraining; retry shortly")
            if self.session.complete:
                raise DomainError("campaign already complete")
            e1 = self._index1.id_of(query_uri)
            counterpart = None if outcome == "bachelor" else self._index2.id_of(outcome)
            status = self.session.submit(e1, counterpart)
            advancing = self.session.batch_answered
            ack = {
                "status": status,
                "advancing": advancing,
                "remaining": self.session.state.remaining,
                "pending_answered": len(self.session.answers),
                "pending_total": len(self.session.pending),
            }
            if advancing:
                self._enter_busy()
                self._advance_async(force=False)
            return ack

    def force_advance(self) -> dict:
        with self.lock:
            if self.busy:
                raise ServiceBusyError("campaign is retraining; retry shortly")
            if self.session.complete:
                raise DomainError("campaign already complete")
            self._enter_busy()
            self._advance_async(force=True)
            return {"status": "advancing", "forced": True}

    def wait_idle(self, timeout: float = 120.0) -> None:
        """Blocks until no background advance is running (used by tests)."""
        for thread in list(self._threads):
            thread.join(timeout)
        self._threads = [t for t in self._threads if t.is_alive()]


def create_app(service: AnnotationService, static_dir: str | Path | None = None) -> FastAPI:
    """Build the HTTP app; `static_dir` optionally serves the browser UI
    from the same origin (mounted after the API routes)."""
    app = FastAPI(title="alignment annotation service")
    app.state.service = service

    @app.exception_handler(KgactiveError)
    async def _handle(request: Request, exc: KgactiveError) -> JSONResponse:
        status, payload = _error_payload(exc)
        return JSONResponse(status_code=status, content=payload)

    @app.get("/api/state")
    def get_state() -> Any:
        return service.state_view()

    @app.get("/api/queries")
    def get_queries() -> Any:
        return service.queries_view()

    @app.post("/api/labels")
    def post_label(body: LabelBody) -> Any:
        return service.submit_label(body.query, body.outcome)

    @app.get("/api/entities/{uri:path}/context")
    def get_context(uri: str, side: int | None = None) -> Any:
        return service.entity_context(uri, side)

    @app.get("/api/search")
    def search(q: str = "", side: int = 2, limit: int = 20) -> Any:
        return {"results": service.search(side, q, limit)}

    @app.post("/api/admin/advance")
    def admin_advance() -> Any:
        return service.force_advance()

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
