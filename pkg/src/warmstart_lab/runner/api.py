"""JSON-over-HTTP surface for interactive feedback sessions.

The browser console polls these endpoints; replies posted here are routed
into the owning session's mailbox. Sessions run on background threads, one
per dataset, and persist their state as JSON after every transition so a
crashed serve process can be inspected and resumed.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from ..data_core import Dataset
from ..errors import IterationMismatch, UnknownSession
from ..eval_metrics import CostLedger
from ..hdkp import (
    STATUS_AWAITING,
    HdkpConfig,
    InteractiveFeedback,
    Session,
    run_session,
)
from ..llm_gateway import Gateway, provider_from_config
from .config import ExperimentConfig, resolve_output_dir

logger = logging.getLogger(__name__)


@dataclass
class SessionRuntime:
    session: Session
    dataset: Dataset
    feedback: InteractiveFeedback
    thread: threading.Thread | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)
    answered: set[int] = field(default_factory=set)
    finalize_requested: threading.Event = field(default_factory=threading.Event)


class SessionManager:
    """Owns interactive sessions and their worker threads."""

    def __init__(self, config: ExperimentConfig, state_dir: Path | None = None):
        self.config = config
        self.state_dir = state_dir or (resolve_output_dir(config) / "sessions")
        self.state_dir.mkdir(parents=True, exist_ok=True)
        self.runtimes: dict[str, SessionRuntime] = {}
        params = {
            k: v
            for k, v in dict(config.hdkp).items()
            if k not in ("feedback", "replies")
        }
        self.hdkp_cfg = HdkpConfig(**params) if params else HdkpConfig()

    def _persist(self, session: Session) -> None:
        path = self.state_dir / f"{session.id}.json"
        path.write_text(
            json.dumps(session.to_json_dict(), indent=2) + "\n", encoding="utf-8"
        )

    def add_session(self, dataset: Dataset, docs_excerpt: str = "") -> SessionRuntime:
        session = Session(
            id=f"hdkp-{dataset.name}",
            dataset_name=dataset.name,
            T=self.hdkp_cfg.T,
            T_min=self.hdkp_cfg.T_min,
        )
        feedback = InteractiveFeedback(timeout_s=self.hdkp_cfg.feedback_timeout_s)
        runtime = SessionRuntime(session=session, dataset=dataset, feedback=feedback)
        self.runtimes[session.id] = runtime

        provider = provider_from_config(self.config.provider)
        gateway = Gateway(provider, CostLedger(), context=("hdkp", dataset.name, 0))

        def work() -> None:
            try:
                run_session(
                    session,
                    dataset,
                    gateway,
                    feedback,
                    self.hdkp_cfg,
                    docs_excerpt=docs_excerpt,
                    prompts_dir=self.config.prompts_dir,
                    on_transition=self._persist,
                )
            except Exception:
                logger.exception("session %s crashed", session.id)

        runtime.thread = threading.Thread(target=work, name=session.id, daemon=True)
        runtime.thread.start()
        return runtime

    def get(self, session_id: str) -> SessionRuntime:
        try:
            return self.runtimes[session_id]
        except KeyError:
            raise UnknownSession(session_id) from None

    def submit_feedback(self, session_id: str, iteration: int, text: str) -> None:
        runtime = self.get(session_id)
        with runtime.lock:
            session = runtime.session
            pending = session.pending
            if (
                session.status != STATUS_AWAITING
                or pending is None
                or pending.iteration != iteration
                or iteration in runtime.answered
            ):
                raise IterationMismatch(
                    f"iteration {iteration} is not awaiting feedback"
                )
            runtime.answered.add(iteration)
            runtime.feedback.mailbox.put(text)

    def shutdown(self) -> None:
        for runtime in self.runtimes.values():
            runtime.feedback.stop_event.set()


class FeedbackBody(BaseModel):
    iteration: int
    text: str


def create_app(manager: SessionManager, console_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="warmstart-lab expert API")

    @app.exception_handler(UnknownSession)
    async def _unknown(request, exc):  # noqa: ANN001
        return JSONResponse(status_code=404, content={"error": "unknown session"})

    @app.exception_handler(IterationMismatch)
    async def _mismatch(request, exc):  # noqa: ANN001
        return JSONResponse(status_code=409, content={"error": str(exc)})

    @app.get("/api/sessions")
    def list_sessions() -> list[dict]:
        return [
            {
                "id": rt.session.id,
                "dataset": rt.session.dataset_name,
                "t": rt.session.t,
                "status": rt.session.status,
            }
            for rt in manager.runtimes.values()
        ]

    @app.get("/api/sessions/{session_id}/pending")
    def pending(session_id: str) -> dict:
        runtime = manager.get(session_id)
        session = runtime.session
        if session.status != STATUS_AWAITING or session.pending is None:
            return {"pending": False, "status": session.status}
        p = session.pending
        return {
            "pending": True,
            "status": session.status,
            "iteration": p.iteration,
            "rules": p.rules,
            "failure": p.failure,
            "question": p.question,
        }

    @app.post("/api/sessions/{session_id}/feedback")
    def feedback(session_id: str, body: FeedbackBody) -> dict:
        if not body.text.strip():
            return JSONResponse(
                status_code=400, content={"accepted": False, "error": "empty reply"}
            )
        manager.submit_feedback(session_id, body.iteration, body.text)
        return {"accepted": True}

    @app.get("/api/sessions/{session_id}/history")
    def history(session_id: str) -> list[dict]:
        runtime = manager.get(session_id)
        return [
            {
                "iteration": r.iteration,
                "query": r.query,
                "reply": r.reply,
                "min_chebyshev": r.min_chebyshev,
            }
            for r in runtime.session.history
        ]

    @app.post("/api/sessions/{session_id}/finalize")
    def request_finalize(session_id: str) -> dict:
        # Operator hatch: unblocks the waiting loop so the engine finalizes
        # with however many rounds completed.
        runtime = manager.get(session_id)
        runtime.feedback.stop_event.set()
        runtime.finalize_requested.set()
        return {"accepted": True}

    if console_dir is not None and Path(console_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(console_dir), html=True), name="console")
    return app
