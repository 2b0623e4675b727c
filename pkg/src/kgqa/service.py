"""HTTP session service: create sessions, poll events, post clarifications.

Each session runs its agent loop on its own thread; AskForClarification
blocks that thread on a queue until a clarification is posted. Event feeds
are append-only and long-pollable, with exactly one terminal event
(final_answer or error) per session.
"""

from __future__ import annotations

import queue
import threading
import uuid
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from . import dialogue
from .config import RunConfig
from .errors import SessionStateError
from .kg import KnowledgeGraph

# Event kinds exposed over HTTP; internal kinds (ambiguity_score) stay out.
PUBLIC_EVENT_KINDS = {"thought", "tool_call", "observation", "hint",
                      "clarification_request", "clarification_response",
                      "final_answer", "error"}


@dataclass
class ManagedSession:
    id: str
    question: str
    events: list[dict] = field(default_factory=list)
    condition: threading.Condition = field(default_factory=threading.Condition)
    clarifications: "queue.Queue[str]" = field(default_factory=queue.Queue)
    state: dialogue.SessionState | None = None
    thread: threading.Thread | None = None
    _next_seq: int = 0

    def push(self, event: dict) -> None:
        if event["kind"] not in PUBLIC_EVENT_KINDS:
            return
        with self.condition:
            self._next_seq += 1
            self.events.append({**event, "seq": self._next_seq})
            self.condition.notify_all()

    def events_after(self, after_seq: int, wait_ms: int = 0) -> list[dict]:
        deadline = wait_ms / 1000.0
        with self.condition:
            if wait_ms > 0 and not any(e["seq"] > after_seq for e in self.events):
                self.condition.wait(timeout=deadline)
            return [e for e in self.events if e["seq"] > after_seq]

    def awaiting(self) -> bool:
        return self.state is not None and self.state.status == "awaiting_clarification"


class SessionService:
    """Holds the shared graph/backends and the registry of live sessions."""

    def __init__(self, graph: KnowledgeGraph, config: RunConfig, backend_factory,
                 clarification_timeout: float = 600.0):
        self.graph = graph
        self.config = config
        self.backend_factory = backend_factory
        self.clarification_timeout = clarification_timeout
        self.sessions: dict[str, ManagedSession] = {}
        self._lock = threading.Lock()

    def create(self, question: str) -> str:
        if not question or not question.strip():
            raise ValueError("question must be non-empty")
        sid = uuid.uuid4().hex
        managed = ManagedSession(id=sid, question=question)
        with self._lock:
            self.sessions[sid] = managed

        backends = self.backend_factory()

        def clarifier(request: str) -> str:
            return managed.clarifications.get(timeout=self.clarification_timeout)

        # clarify() needs to see the live status, so the loop is driven here
        # with a state that is registered before the first turn runs.
        def run_with_state():
            session = dialogue.SessionState(question=question,
                                            turn_budget=self.config.turn_budget,
                                            observer=managed.push)
            managed.state = session
            try:
                while session.status == "running":
                    if len(session.history) >= session.turn_budget:
                        session.fail("budget")
                        break
                    action = dialogue.next_action(session, self.config, backends.chat)
                    if session.status != "running":
                        break
                    dialogue.step(session, action, self.graph, self.config.thresholds,
                                  backends.ppl, self.config.tool_k)
                    if session.status == "awaiting_clarification":
                        try:
                            response = clarifier(session.history[-1].action.args[0])
                        except queue.Empty:
                            session.fail("clarification timeout")
                            break
                        dialogue.resume(session, response)
            except Exception as exc:  # the feed must always reach a terminal event
                if session.status != "failed":
                    session.fail(f"internal error: {exc}")

        managed.thread = threading.Thread(target=run_with_state, daemon=True)
        managed.thread.start()
        return sid

    def get(self, sid: str) -> ManagedSession:
        with self._lock:
            if sid not in self.sessions:
                raise KeyError(sid)
            return self.sessions[sid]

    def events(self, sid: str, after_seq: int = 0, wait_ms: int = 0) -> list[dict]:
        return self.get(sid).events_after(after_seq, wait_ms)

    def clarify(self, sid: str, text: str) -> None:
        managed = self.get(sid)
        if not text or not text.strip():
            raise ValueError("clarification text must be non-empty")
        # not-empty check closes the double-submit race: one response per request
        if not managed.awaiting() or not managed.clarifications.empty():
            raise SessionStateError("session is not awaiting clarification")
        managed.clarifications.put(text)


class QuestionIn(BaseModel):
    question: str


class ClarificationIn(BaseModel):
    text: str


def create_app(service: SessionService) -> FastAPI:
    app = FastAPI(title="kgqa session service")

    @app.get("/healthz")
    def healthz():
        return {"ok": True}

    @app.post("/sessions")
    def create_session(body: QuestionIn):
        try:
            sid = service.create(body.question)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"id": sid}

    @app.get("/sessions/{sid}/events")
    def get_events(sid: str, after: int = 0, wait_ms: int = 0):
        try:
            events = service.events(sid, after_seq=after, wait_ms=min(wait_ms, 30000))
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown session")
        return {"events": events}

    @app.post("/sessions/{sid}/clarification")
    def post_clarification(sid: str, body: ClarificationIn):
        try:
            service.clarify(sid, body.text)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown session")
        except SessionStateError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"ok": True}

    return app
