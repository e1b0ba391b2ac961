"""Live adaptive-test sessions over HTTP.

Protocol (JSON bodies, errors as ``{"code", "message"}``):

* ``POST /sessions``                 -- start a session, get question 1
* ``POST /sessions/{id}/answers``    -- submit ``{answer, idempotency_token}``;
  returns the next question, or the final diagnosis at the last step
* ``GET  /sessions/{id}/diagnosis``  -- current report, read-only
* ``GET  /healthz``

Sessions persist in an embedded sqlite store so a restart resumes active
sessions; per-session locks serialize concurrent requests for the same id.
"""

from __future__ import annotations

import json
import secrets
import sqlite3
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .baselines import STRATEGY_NAMES, compatible
from .cdm import DiagnosisModel, UpdateConfig
from .environment import ConceptGraph, Record, SessionState, default_seed
from .errors import MaatError, UndefinedMetricError
from .harness.experiment import build_strategy
from .harness.metrics import mann_whitney_auc
from .importance import ImportanceTable

SESSION_TTL_SECONDS = 24 * 3600


class SessionStore:
    """Embedded key-value store; one JSON blob per session."""

    def __init__(self, path: str | Path | None = None):
        self._uri = str(path) if path is not None else ":memory:"
        self._conn = sqlite3.connect(self._uri, check_same_thread=False)
        self._conn.execute(
            "CREATE TABLE IF NOT EXISTS sessions ("
            "id TEXT PRIMARY KEY, payload TEXT NOT NULL, last_active REAL NOT NULL)")
        self._conn.commit()
        self._mutex = threading.Lock()

    def get(self, session_id: str) -> dict | None:
        with self._mutex:
            row = self._conn.execute(
                "SELECT payload FROM sessions WHERE id = ?", (session_id,)).fetchone()
        return json.loads(row[0]) if row else None

    def put(self, session_id: str, payload: dict) -> None:
        with self._mutex:
            self._conn.execute(
                "INSERT INTO sessions (id, payload, last_active) VALUES (?, ?, ?) "
                "ON CONFLICT(id) DO UPDATE SET payload = excluded.payload, "
                "last_active = excluded.last_active",
                (session_id, json.dumps(payload), time.time()))
            self._conn.commit()

    def purge_older_than(self, ttl_seconds: float) -> int:
        cutoff = time.time() - ttl_seconds
        with self._mutex:
            cur = self._conn.execute(
                "DELETE FROM sessions WHERE last_active < ?", (cutoff,))
            self._conn.commit()
        return cur.rowcount


@dataclass
class ServiceEngine:
    """Pretrained models plus the shared selection machinery, loaded at boot."""

    models: dict[str, DiagnosisModel]
    graph: ConceptGraph
    importance: ImportanceTable
    store: SessionStore = field(default_factory=SessionStore)
    seed: int = field(default_factory=default_seed)
    default_n_steps: int = 20
    default_k_c: int | None = 10
    update_config: UpdateConfig = field(default_factory=UpdateConfig)
    ttl_seconds: float = SESSION_TTL_SECONDS

    def __post_init__(self):
        self._locks: dict[str, threading.Lock] = {}
        self._locks_mutex = threading.Lock()

    def lock_for(self, session_id: str) -> threading.Lock:
        with self._locks_mutex:
            return self._locks.setdefault(session_id, threading.Lock())

    def strategy(self, name: str, k_c: int | None):
        return build_strategy(name, self.graph, self.importance, k_c, self.seed)


def _error(status: int, message: str) -> HTTPException:
    return HTTPException(status_code=status, detail=message)


def _session_state(doc: dict) -> SessionState:
    tested = list(doc["tested"])
    session = SessionState(
        examinee=doc["examinee_ref"],
        tested=tested,
        untested=set(range(doc["n_questions"])) - set(tested),
        records=[Record(doc["examinee_ref"], q, a)
                 for q, a in zip(tested, doc["answers"])],
        step=len(tested),
    )
    return session


def _mastery_projection(model: DiagnosisModel, state: np.ndarray,
                        n_concepts: int) -> list[float]:
    """Display-only mapping of the model state onto per-concept values in [0, 1].

    Not a psychometric claim: scalar ability is squashed and replicated;
    multidimensional ability hashes dimensions onto concepts; the neural
    model's mastery vector is already per-concept.
    """
    theta = np.asarray(state, dtype=np.float64).reshape(-1)
    if model.kind == "irt":
        value = float(1.0 / (1.0 + np.exp(-theta[0])))
        return [value] * n_concepts
    if model.kind == "mirt":
        squashed = 1.0 / (1.0 + np.exp(-theta))
        return [float(squashed[k % len(theta)]) for k in range(n_concepts)]
    return [float(np.clip(theta[k], 0.0, 1.0)) for k in range(n_concepts)]


def _diagnosis(engine: ServiceEngine, doc: dict) -> dict:
    model = engine.models[doc["model"]]
    state = np.array(doc["state"], dtype=np.float64)
    graph = engine.graph
    covered: set[int] = set()
    for q in doc["tested"]:
        covered |= graph.concepts_of(q)
    history = [
        {"question": q, "predicted": p, "answer": a}
        for q, p, a in zip(doc["tested"], doc["predicted"], doc["answers"])
    ]
    inf_proxy = None
    answers = doc["answers"]
    if len(set(answers)) == 2:
        try:
            inf_proxy = mann_whitney_auc(doc["predicted"], answers)
        except UndefinedMetricError:
            inf_proxy = None
    pending = doc.get("pending_question")
    return {
        "session_id": doc["id"],
        "status": doc["status"],
        "step": len(doc["tested"]),
        "n_steps": doc["n_steps"],
        "model": doc["model"],
        "strategy": doc["strategy"],
        "mastery": {str(k): m for k, m in
                    enumerate(_mastery_projection(model, state, graph.n_concepts))},
        "history": history,
        "coverage": len(covered) / graph.n_concepts,
        "inf_proxy": inf_proxy,
        "pending_question": (None if pending is None
                             else _question_payload_for(graph, pending)),
    }


def _question_payload_for(graph: ConceptGraph, question: int) -> dict:
    return {"id": question, "concepts": sorted(graph.concepts_of(question))}


def _question_payload(engine: ServiceEngine, question: int) -> dict:
    return _question_payload_for(engine.graph, question)


def create_app(engine: ServiceEngine) -> FastAPI:
    app = FastAPI(title="maat session service")
    app.state.engine = engine

    @app.exception_handler(HTTPException)
    async def http_error_handler(request: Request, exc: HTTPException):
        return JSONResponse(status_code=exc.status_code,
                            content={"code": exc.status_code, "message": str(exc.detail)})

    @app.exception_handler(MaatError)
    async def engine_error_handler(request: Request, exc: MaatError):
        return JSONResponse(status_code=500,
                            content={"code": 500, "message": str(exc)})

    @app.exception_handler(RequestValidationError)
    async def body_error_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400,
                            content={"code": 400,
                                     "message": f"invalid request body: {exc.errors()[:1]}"})

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "models": sorted(engine.models)}

    @app.post("/sessions", status_code=201)
    def start_session(body: dict):
        if not engine.models:
            raise _error(503, "service has no pretrained model loaded")
        engine.store.purge_older_than(engine.ttl_seconds)

        model_kind = body.get("model")
        strategy_name = body.get("strategy", "maat")
        n_steps = body.get("n_steps", engine.default_n_steps)
        k_c = body.get("k_c", engine.default_k_c)
        examinee_ref = body.get("examinee_ref", 0)

        if model_kind not in engine.models:
            raise _error(400, f"unknown model {model_kind!r}; loaded: {sorted(engine.models)}")
        if strategy_name not in STRATEGY_NAMES:
            raise _error(400, f"unknown strategy {strategy_name!r}")
        if not compatible(strategy_name, model_kind):
            raise _error(400, f"strategy {strategy_name!r} cannot run on model {model_kind!r}")
        if not isinstance(n_steps, int) or n_steps < 1:
            raise _error(400, f"n_steps must be a positive integer, got {n_steps!r}")
        if n_steps > engine.graph.n_questions:
            raise _error(400, f"n_steps={n_steps} exceeds pool size {engine.graph.n_questions}")
        if k_c is not None and (not isinstance(k_c, int) or k_c < 1):
            raise _error(400, f"k_c must be a positive integer or null, got {k_c!r}")
        if not isinstance(examinee_ref, int) or examinee_ref < 0:
            raise _error(400, f"examinee_ref must be a non-negative integer")

        model = engine.models[model_kind]
        state = model.init_state()
        session_id = secrets.token_hex(16)
        doc = {
            "id": session_id,
            "created": time.time(),
            "model": model_kind,
            "strategy": strategy_name,
            "n_steps": n_steps,
            "k_c": k_c,
            "examinee_ref": examinee_ref,
            "n_questions": engine.graph.n_questions,
            "status": "active",
            "tested": [],
            "answers": [],
            "predicted": [],
            "state": state.tolist(),
            "pending_question": None,
            "idempotency": {},
        }
        strategy = engine.strategy(strategy_name, k_c)
        question = strategy.select(_session_state(doc), model, state)
        doc["pending_question"] = question
        engine.store.put(session_id, doc)
        return {
            "session_id": session_id,
            "step": 1,
            "n_steps": n_steps,
            "question": _question_payload(engine, question),
        }

    @app.post("/sessions/{session_id}/answers")
    def submit_answer(session_id: str, body: dict):
        with engine.lock_for(session_id):
            doc = engine.store.get(session_id)
            if doc is None:
                raise _error(404, f"unknown session {session_id!r}")
            if doc["status"] == "finished":
                raise _error(409, "session is finished; no further answers accepted")

            answer = body.get("answer")
            token = body.get("idempotency_token")
            if answer not in (0, 1):
                raise _error(400, f"answer must be 0 or 1, got {answer!r}")
            if not token or not isinstance(token, str):
                if doc["tested"]:
                    raise _error(409, "a token-less submit cannot be deduplicated "
                                      "against already-answered steps")
                raise _error(400, "idempotency_token is required")

            # A replayed token returns the response stored for its step.
            for stored in doc["idempotency"].values():
                if stored["token"] == token:
                    return stored["response"]

            pending_step = len(doc["tested"]) + 1

            model = engine.models[doc["model"]]
            state = np.array(doc["state"], dtype=np.float64)
            question = doc["pending_question"]

            predicted = model.predict(state, question)
            doc["tested"].append(question)
            doc["answers"].append(int(answer))
            doc["predicted"].append(predicted)

            session = _session_state(doc)
            state = model.update(state, session.records, engine.update_config)
            doc["state"] = state.tolist()

            if len(doc["tested"]) >= doc["n_steps"]:
                doc["status"] = "finished"
                doc["pending_question"] = None
                response = {
                    "session_id": session_id,
                    "status": "finished",
                    "report": _diagnosis(engine, doc),
                }
            else:
                strategy = engine.strategy(doc["strategy"], doc["k_c"])
                next_question = strategy.select(session, model, state)
                doc["pending_question"] = next_question
                response = {
                    "session_id": session_id,
                    "status": "active",
                    "step": len(doc["tested"]) + 1,
                    "n_steps": doc["n_steps"],
                    "question": _question_payload(engine, next_question),
                }

            doc["idempotency"][str(pending_step)] = {"token": token, "response": response}
            engine.store.put(session_id, doc)
            return response

    @app.get("/sessions/{session_id}/diagnosis")
    def get_diagnosis(session_id: str):
        doc = engine.store.get(session_id)
        if doc is None:
            raise _error(404, f"unknown session {session_id!r}")
        return _diagnosis(engine, doc)

    ui_dir = Path(__file__).resolve().parent.parent.parent / "frontend" / "dist"
    if ui_dir.is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def engine_from_files(model_paths: list[str | Path], importance_path: str | Path,
                      store_path: str | Path | None = None,
                      seed: int | None = None,
                      default_n_steps: int = 20,
                      default_k_c: int | None = 10) -> ServiceEngine:
    """Boot an engine from checkpoint files (the ``maat serve`` path)."""
    from .cdm import load_graph_from_checkpoint, load_model
    from .errors import ConfigurationError

    models: dict[str, DiagnosisModel] = {}
    graph: ConceptGraph | None = None
    for path in model_paths:
        model = load_model(path)
        models[model.kind] = model
        found = load_graph_from_checkpoint(path)
        if found is not None:
            graph = found
    if graph is None:
        raise ConfigurationError(
            "no checkpoint carries the concept graph; re-save with graph embedded")
    importance = ImportanceTable.load(importance_path)
    return ServiceEngine(
        models=models, graph=graph, importance=importance,
        store=SessionStore(store_path),
        seed=seed if seed is not None else default_seed(),
        default_n_steps=default_n_steps, default_k_c=default_k_c,
    )
