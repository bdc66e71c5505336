"""Live optimization sessions over HTTP: queries out, choices in.

A session serves one decision-maker.  While they deliberate over the
pending query, the next query for *every* possible response is computed
in the background; whichever choice arrives is answered from that
prefetch map, hiding the acquisition-optimization latency.  Branch seeds
are derived by hashing (session seed, revision, response index), so a
prefetched query is bit-identical to what a synchronous computation would
produce.

Every accepted event is appended to a per-session JSON-lines journal and
fsynced before the request is acknowledged; replaying the journal
reconstructs the exact dataset and pending query after a crash.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
import uuid
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .acquisition import AcquisitionSpec
from .bench import next_query, recommend
from .core import (
    Domain,
    PreferenceDataset,
    Query,
    Response,
    append_observation,
    derive_seed,
    domain_from_json,
)
from .model import (
    HyperFitConfig,
    Hyperparameters,
    default_hyperparameters,
    fit_hyperparameters,
    fit_laplace,
    posterior_mean_grad,
)

__all__ = [
    "SessionError",
    "RevisionConflict",
    "UnknownSession",
    "SessionManager",
    "create_app",
]

REFIT_EVERY = 5


class SessionError(ValueError):
    code = "invalid-request"
    status = 400


class RevisionConflict(SessionError):
    code = "revision-conflict"
    status = 409


class UnknownSession(SessionError):
    code = "unknown-session"
    status = 404


class SessionClosed(SessionError):
    code = "session-closed"
    status = 409


@dataclass(frozen=True)
class BranchResult:
    """Everything one response branch precomputes: model, query, incumbent."""

    query: Query
    incumbent: np.ndarray
    incumbent_mean: float
    model: object
    hyper: Hyperparameters


def _hyper_for(
    ds: PreferenceDataset,
    domain: Domain,
    seed: int,
    cache: dict | None = None,
) -> Hyperparameters:
    """Hyperparameters as a pure function of (dataset prefix, seed).

    Refitting happens at dataset sizes that are multiples of REFIT_EVERY,
    always on the prefix of that size and from the default initialization,
    so a journal replay reproduces the live session with a single fit.
    The optional cache (keyed by refit floor) only avoids recomputing a
    value that is fully determined by its key.
    """
    floor = (ds.n // REFIT_EVERY) * REFIT_EVERY
    if floor == 0:
        return default_hyperparameters(domain.dim)
    prefix = ds if ds.n == floor else _prefix_dataset(ds, floor)
    # key on the prefix contents, not just its size: at a refit boundary the
    # speculative branches differ in their final observation, and a
    # floor-only key would let one branch poison the others
    key = (floor, _dataset_fingerprint(prefix))
    if cache is not None and key in cache:
        return cache[key]
    cfg = HyperFitConfig(restarts=2, maxiter=15, seed=derive_seed(seed, "hyper", floor))
    hyper = fit_hyperparameters(prefix, cfg, domain)
    if cache is not None:
        cache[key] = hyper
    return hyper


def _dataset_fingerprint(ds: PreferenceDataset) -> bytes:
    digest = hashlib.sha256()
    for (query, resp), _ in zip(ds.observations, ds.indices):
        digest.update(query.points.tobytes())
        digest.update(bytes([resp.choice % 256]))
    return digest.digest()


def _prefix_dataset(ds: PreferenceDataset, n: int) -> PreferenceDataset:
    out = PreferenceDataset()
    for query, resp in ds.observations[:n]:
        out = append_observation(out, query, resp)
    return out


def _compute_branch(
    domain: Domain,
    spec: AcquisitionSpec,
    seed: int,
    ds: PreferenceDataset,
    revision: int,
    choice: int | None,
    hyper_cache: dict | None = None,
) -> BranchResult:
    """Fit on ``ds`` and select the next query; fully seed-determined.

    ``choice`` is None for the session's first query, else the response
    index whose acceptance produced ``ds``.
    """
    key = ("first",) if choice is None else (revision, choice)
    hyper = _hyper_for(ds, domain, seed, hyper_cache)
    model = fit_laplace(ds, hyper, domain)
    acq_rng = np.random.default_rng(derive_seed(seed, "branch", *key))
    sobol_seed = derive_seed(seed, "sobol", *key)
    query = next_query(model, spec, ds, domain, acq_rng, sobol_seed)
    rec_rng = np.random.default_rng(derive_seed(seed, "rec", *key))
    incumbent = recommend(model, domain, rec_rng)
    mean, _ = posterior_mean_grad(model, incumbent[None, :])
    return BranchResult(query, incumbent, float(mean[0]), model, hyper)


class _Session:
    def __init__(self, manager, session_id: str, domain: Domain, spec: AcquisitionSpec, seed: int):
        self.manager = manager
        self.id = session_id
        self.domain = domain
        self.spec = spec
        self.seed = seed
        self.lock = threading.RLock()
        self.revision = 0
        self.status = "computing"
        self.dataset = PreferenceDataset()
        self.pending: Query | None = None
        self.model = None
        self.incumbents: list[dict] = []
        self.responses: list[dict] = []
        self.prefetch: dict[tuple[int, int], Future] = {}
        self.hyper_cache: dict[int, object] = {}

    # -- journal -----------------------------------------------------------

    @property
    def journal_path(self) -> Path:
        return self.manager.data_dir / f"{self.id}.jsonl"

    def journal_append(self, events: list[dict]) -> None:
        with open(self.journal_path, "a", encoding="utf-8") as fh:
            for event in events:
                fh.write(json.dumps(event) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    # -- prefetch ----------------------------------------------------------

    def launch_prefetch(self) -> None:
        if self.pending is None or self.status == "closed":
            return
        for choice in range(self.spec.q):
            key = (self.revision, choice)
            if key in self.prefetch:
                continue
            ds_next = append_observation(self.dataset, self.pending, Response(choice))
            self.prefetch[key] = self.manager.executor.submit(
                _compute_branch, self.domain, self.spec, self.seed,
                ds_next, self.revision, choice, self.hyper_cache,
            )

    def snapshot(self) -> dict:
        return {
            "session_id": self.id,
            "revision": self.revision,
            "status": self.status,
            "q": self.spec.q,
            "algo": self.spec.kind,
            "domain": self.domain.to_json(),
            "query": self.pending.points.tolist() if self.pending else None,
            "responses": list(self.responses),
            "incumbents": list(self.incumbents),
        }


class SessionManager:
    """Owns all sessions, their journals, and the prefetch executor."""

    def __init__(self, data_dir, max_workers: int = 4):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.executor = ThreadPoolExecutor(max_workers=max_workers)
        self._sessions: dict[str, _Session] = {}
        self._lock = threading.Lock()

    # -- lifecycle ----------------------------------------------------------

    def create_session(
        self, domain: Domain, q: int, algo: str = "qeubo", seed: int = 0,
        mc_samples: int = 128, restarts: int = 16,
    ) -> dict:
        """Start a session: fit the prior, issue the first query, persist."""
        if q < 2:
            raise SessionError(f"q must be at least 2, got {q}")
        spec = AcquisitionSpec(
            kind=algo, q=q, mc_samples=mc_samples, restarts=restarts
        )
        session = _Session(self, uuid.uuid4().hex, domain, spec, seed)
        first = _compute_branch(
            domain, spec, seed, session.dataset, 0, None, session.hyper_cache
        )
        session.pending = first.query
        session.model = first.model
        session.incumbents.append(
            {"revision": 0, "point": first.incumbent.tolist(), "mean": first.incumbent_mean}
        )
        session.journal_append(
            [
                {
                    "event": "created",
                    "session_id": session.id,
                    "revision": 0,
                    "domain": domain.to_json(),
                    "spec": spec.to_json(),
                    "seed": seed,
                    "ts": time.time(),
                },
                _query_event(session, first),
            ]
        )
        session.status = "awaiting-response"
        with self._lock:
            self._sessions[session.id] = session
        session.launch_prefetch()
        return {
            "session_id": session.id,
            "revision": 0,
            "query": session.pending.points.tolist(),
            "incumbent": first.incumbent.tolist(),
            "incumbent_mean": first.incumbent_mean,
        }

    def get(self, session_id: str) -> _Session:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            session = self._load(session_id)
        if session is None:
            raise UnknownSession(f"no session {session_id!r}")
        return session

    def close(self, session_id: str) -> None:
        session = self.get(session_id)
        with session.lock:
            session.status = "closed"

    # -- core operations ----------------------------------------------------

    def submit_response(self, session_id: str, revision: int, choice: int) -> dict:
        """Accept one choice; return the next query and current incumbent.

        Optimistic concurrency: ``revision`` must equal the session's
        current revision or the submission is rejected unchanged.
        """
        session = self.get(session_id)
        with session.lock:
            if session.status == "closed":
                raise SessionClosed(f"session {session_id} is closed")
            if revision != session.revision:
                raise RevisionConflict(
                    f"stale revision {revision}, session is at {session.revision}"
                )
            if not 0 <= choice < session.spec.q:
                raise SessionError(
                    f"choice {choice} out of range for q={session.spec.q}"
                )
            session.status = "computing"
            try:
                answered = session.pending
                ds_next = append_observation(session.dataset, answered, Response(choice))
                key = (session.revision, choice)
                future = session.prefetch.pop(key, None)
                if future is not None:
                    result = future.result()
                else:
                    result = _compute_branch(
                        session.domain, session.spec, session.seed,
                        ds_next, session.revision, choice, session.hyper_cache,
                    )
                session.prefetch.clear()

                session.revision += 1
                session.dataset = ds_next
                session.pending = result.query
                session.model = result.model
                record = {
                    "revision": session.revision,
                    "choice": choice,
                    "query": answered.points.tolist(),
                }
                session.responses.append(record)
                session.incumbents.append(
                    {
                        "revision": session.revision,
                        "point": result.incumbent.tolist(),
                        "mean": result.incumbent_mean,
                    }
                )
                session.journal_append(
                    [
                        {"event": "response-accepted", "ts": time.time(), **record},
                        _query_event(session, result),
                    ]
                )
            finally:
                session.status = (
                    "awaiting-response" if session.status != "closed" else "closed"
                )
            session.launch_prefetch()
            return {
                "revision": session.revision,
                "query": session.pending.points.tolist(),
                "incumbent": result.incumbent.tolist(),
                "incumbent_mean": result.incumbent_mean,
            }

    def get_recommendation(self, session_id: str) -> dict:
        """Latest posterior-mean maximizer plus the full incumbent trace."""
        session = self.get(session_id)
        latest = session.incumbents[-1]
        session.journal_append(
            [
                {
                    "event": "recommendation-served",
                    "revision": session.revision,
                    "point": latest["point"],
                    "mean": latest["mean"],
                    "ts": time.time(),
                }
            ]
        )
        return {
            "point": latest["point"],
            "mean": latest["mean"],
            "incumbents": list(session.incumbents),
        }

    def get_state(self, session_id: str) -> dict:
        return self.get(session_id).snapshot()

    # -- journal replay ------------------------------------------------------

    def _load(self, session_id: str) -> _Session | None:
        path = self.data_dir / f"{session_id}.jsonl"
        if not path.exists():
            return None
        events = [json.loads(line) for line in path.read_text().splitlines() if line]
        created = next(e for e in events if e["event"] == "created")
        domain = domain_from_json(created["domain"])
        spec = AcquisitionSpec.from_json(created["spec"])
        session = _Session(self, session_id, domain, spec, created["seed"])

        for event in events:
            if event["event"] == "response-accepted":
                query = Query(event["query"])
                session.dataset = append_observation(
                    session.dataset, query, Response(event["choice"])
                )
                session.responses.append(
                    {
                        "revision": event["revision"],
                        "choice": event["choice"],
                        "query": event["query"],
                    }
                )
                session.revision = event["revision"]
            elif event["event"] == "query-issued":
                session.pending = Query(event["query"])
                session.incumbents.append(
                    {
                        "revision": event["revision"],
                        "point": event["incumbent"],
                        "mean": event["incumbent_mean"],
                    }
                )
        if session.dataset.n != session.revision:
            raise SessionError(
                f"journal for {session_id} is inconsistent: "
                f"{session.dataset.n} observations at revision {session.revision}"
            )
        session.status = "awaiting-response"
        with self._lock:
            self._sessions[session_id] = session
        session.launch_prefetch()
        return session


def _query_event(session: _Session, result: BranchResult) -> dict:
    return {
        "event": "query-issued",
        "revision": session.revision,
        "query": result.query.points.tolist(),
        "incumbent": result.incumbent.tolist(),
        "incumbent_mean": result.incumbent_mean,
        "ts": time.time(),
    }


# ---------------------------------------------------------------------------
# HTTP layer

from pydantic import BaseModel


class CreateBody(BaseModel):
    domain: dict
    q: int = 2
    algo: str = "qeubo"
    seed: int = 0
    mc_samples: int = 128
    restarts: int = 16


class ResponseBody(BaseModel):
    revision: int
    choice: int


def create_app(manager: SessionManager, static_dir: str | None = None):
    from fastapi import FastAPI, Request
    from fastapi.middleware.cors import CORSMiddleware
    from fastapi.responses import JSONResponse

    app = FastAPI(title="prefbo session service")
    # the browser client may be served from a different origin (file server
    # or dev bundler); the API carries no credentials
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(SessionError)
    async def _session_error(request: Request, exc: SessionError):
        return JSONResponse(
            status_code=exc.status, content={"code": exc.code, "message": str(exc)}
        )

    @app.exception_handler(ValueError)
    async def _value_error(request: Request, exc: ValueError):
        return JSONResponse(
            status_code=400, content={"code": "invalid-request", "message": str(exc)}
        )

    @app.post("/sessions")
    def create_session(body: CreateBody):
        domain = domain_from_json(body.domain)
        return manager.create_session(
            domain, body.q, body.algo, body.seed, body.mc_samples, body.restarts
        )

    @app.post("/sessions/{session_id}/responses")
    def submit_response(session_id: str, body: ResponseBody):
        return manager.submit_response(session_id, body.revision, body.choice)

    @app.get("/sessions/{session_id}/recommendation")
    def get_recommendation(session_id: str):
        return manager.get_recommendation(session_id)

    @app.get("/sessions/{session_id}")
    def get_state(session_id: str):
        return manager.get_state(session_id)

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    return app
