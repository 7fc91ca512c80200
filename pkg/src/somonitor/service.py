"""HTTP JSON facade over the pipeline.

Long stages (pillars, clusters) run on a background worker and answer 202
with a pollable run descriptor; identical re-submissions return the cached
Done run because run ids derive from content. Everything else answers
synchronously. Errors: 400 schema/validation, 404 unknown ids, 409 for a
duplicate in-flight run on the same dataset and stage, 502 for backend
failures (with the gateway's error detail).
"""

from __future__ import annotations

import enum
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from typing import Callable, Literal, Optional

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .clustering import ClusterConfig
from .config import AppConfig
from .errors import SomonitorError
from .evaluation import EvalConfig
from .gateway import AuthFailure, BackendUnavailable
from .pillars import PillarKind, batch_extract, load_template
from .pipeline import (
    build_gateway,
    load_cards,
    run_clusters,
    run_evaluation,
    run_opportunities,
    run_ranking,
    run_story,
)
from .ranking import AllRunsFailed
from .store import ArtifactKey, NotFound, Store, SubsetFilter, UnknownDataset
from .util import short_digest

_BACKEND_ERRORS = (BackendUnavailable, AuthFailure, AllRunsFailed)


class Stage(enum.Enum):
    PILLARS = "pillars"
    CLUSTERS = "clusters"
    RANKING = "ranking"
    EVALUATION = "evaluation"
    STORY = "story"


class RunStatus(enum.Enum):
    PENDING = "pending"
    RUNNING = "running"
    DONE = "done"
    FAILED = "failed"


class RunDescriptor:
    """Trackable pipeline run; progress is monotone, transitions one-way."""

    def __init__(self, run_id: str, stage: Stage, dataset_id: str):
        self.run_id = run_id
        self.stage = stage
        self.dataset_id = dataset_id
        self.status = RunStatus.PENDING
        self.progress = 0.0
        self.error: Optional[str] = None
        self._lock = threading.Lock()

    def update(self, status: Optional[RunStatus] = None, progress: Optional[float] = None, error: Optional[str] = None):
        with self._lock:
            if status is not None:
                allowed = {
                    RunStatus.PENDING: {RunStatus.RUNNING},
                    RunStatus.RUNNING: {RunStatus.DONE, RunStatus.FAILED},
                    RunStatus.DONE: set(),
                    RunStatus.FAILED: set(),
                }
                if status != self.status and status not in allowed[self.status]:
                    raise RuntimeError(f"illegal transition {self.status} -> {status}")
                self.status = status
            if progress is not None:
                self.progress = max(self.progress, min(progress, 1.0))
            if error is not None:
                self.error = error

    def to_payload(self) -> dict:
        with self._lock:
            return {
                "run_id": self.run_id,
                "stage": self.stage.value,
                "dataset_id": self.dataset_id,
                "status": self.status.value,
                "progress": self.progress,
                "error": self.error,
            }


class AppState:
    def __init__(self, config: AppConfig, store: Optional[Store] = None, gateway=None):
        self.config = config
        self.store = store or Store(config.store_root)
        self.gateway = gateway or build_gateway(self.store, config.gateway)
        self.backend_id = config.gateway.backend
        self.runs: dict[str, RunDescriptor] = {}
        self.lock = threading.Lock()
        self.executor = ThreadPoolExecutor(max_workers=4)

    def launch(self, stage: Stage, dataset_id: str, run_id: str, work: Callable[[], None]) -> tuple[RunDescriptor, bool]:
        """Schedule background work once per (dataset, stage); returns the
        descriptor and whether it was newly scheduled."""
        with self.lock:
            existing = self.runs.get(run_id)
            if existing is not None and existing.status == RunStatus.DONE:
                return existing, False
            for desc in self.runs.values():
                if (
                    desc.dataset_id == dataset_id
                    and desc.stage == stage
                    and desc.status in (RunStatus.PENDING, RunStatus.RUNNING)
                ):
                    raise HTTPException(status_code=409, detail=f"a {stage.value} run is already in flight for {dataset_id}")
            descriptor = RunDescriptor(run_id, stage, dataset_id)
            self.runs[run_id] = descriptor

        def task():
            descriptor.update(status=RunStatus.RUNNING, progress=0.05)
            try:
                work()
                descriptor.update(status=RunStatus.DONE, progress=1.0)
            except Exception as exc:
                descriptor.update(status=RunStatus.FAILED, error=str(exc))

        self.executor.submit(task)
        return descriptor, True

    def completed(self, stage: Stage, dataset_id: str, run_id: str) -> RunDescriptor:
        with self.lock:
            descriptor = self.runs.get(run_id)
            if descriptor is None:
                descriptor = RunDescriptor(run_id, stage, dataset_id)
                descriptor.status = RunStatus.DONE
                descriptor.progress = 1.0
                self.runs[run_id] = descriptor
            return descriptor


class DatasetIn(BaseModel):
    path: str
    format: Literal["jsonl", "csv"] = "jsonl"


class PillarsRunIn(BaseModel):
    dataset_id: str
    backend: Optional[str] = None


class ClustersRunIn(BaseModel):
    dataset_id: str
    pillar: Literal["audience", "insight"]
    k0: int = 3
    k_max: int = 50
    seed: int = 0
    max_iterations: int = 100
    outlier_percentile: float = 95.0
    backend: Optional[str] = None


class RankIn(BaseModel):
    dataset_id: str
    ranker: Literal["score", "llm"]
    grounded: bool = False
    alpha: float = 1.0
    beta: float = 0.0
    classifier: str = "oracle"
    ensemble_runs: int = Field(default=5, ge=1)
    seed_base: int = 0
    brand: Optional[str] = None
    objective: Optional[str] = None
    backend: Optional[str] = None


class EvaluateIn(BaseModel):
    dataset_id: str
    rankers: list[str]
    relevance_size: int = Field(default=5, ge=1)
    cutoffs: list[int] = [3, 5, 10]


class StoryIn(BaseModel):
    dataset_id: str
    persona_id: str
    challenge_id: str
    brand: str


def create_app(state: Optional[AppState] = None, config: Optional[AppConfig] = None) -> FastAPI:
    state = state or AppState(config or AppConfig())
    app = FastAPI(title="somonitor", version="0.1.0")
    app.state.somonitor = state
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(state.config.service.cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(RequestValidationError)
    async def schema_violation(_req: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    @app.exception_handler(SomonitorError)
    async def domain_error(_req: Request, exc: SomonitorError):
        if isinstance(exc, _BACKEND_ERRORS):
            return JSONResponse(status_code=502, content={"detail": str(exc)})
        if isinstance(exc, (NotFound, UnknownDataset)):
            return JSONResponse(status_code=404, content={"detail": str(exc)})
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(ValueError)
    async def value_error(_req: Request, exc: ValueError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.post("/datasets")
    def post_dataset(body: DatasetIn):
        handle = state.store.load_dataset(body.path, format=body.format)
        return asdict(handle)

    @app.get("/datasets/{dataset_id}/stats")
    def get_stats(dataset_id: str):
        return state.store.dataset_stats(dataset_id).to_payload()

    @app.post("/runs/pillars", status_code=202)
    def post_pillars_run(body: PillarsRunIn):
        backend_id = body.backend or state.backend_id
        handle = state.store.get_handle(body.dataset_id)
        template = load_template("pillars.v1")
        run_id = short_digest(["pillars", handle.checksum, template.template_id, backend_id])
        if state.store.has_artifact(ArtifactKey("pillars", body.dataset_id, run_id)):
            return JSONResponse(
                status_code=200,
                content=state.completed(Stage.PILLARS, body.dataset_id, run_id).to_payload(),
            )
        descriptor, _ = state.launch(
            Stage.PILLARS,
            body.dataset_id,
            run_id,
            lambda: batch_extract(
                state.store,
                body.dataset_id,
                state.gateway,
                backend_id,
                template,
                temperature=state.config.gateway.temperature,
            ),
        )
        return descriptor.to_payload()

    @app.post("/runs/clusters", status_code=202)
    def post_clusters_run(body: ClustersRunIn):
        backend_id = body.backend or state.backend_id
        handle = state.store.get_handle(body.dataset_id)
        try:
            table_run = state.store.latest_run_id("pillars", body.dataset_id)
        except NotFound:
            raise HTTPException(status_code=404, detail=f"no pillar table for {body.dataset_id}; run pillars first")
        cluster_config = ClusterConfig(
            k0=body.k0,
            k_max=body.k_max,
            seed=body.seed,
            max_iterations=body.max_iterations,
            outlier_percentile=body.outlier_percentile,
            pillar=PillarKind(body.pillar),
        )
        run_id = short_digest(
            [
                "clusters",
                handle.checksum,
                table_run,
                body.pillar,
                body.k0,
                body.k_max,
                body.seed,
                body.max_iterations,
                body.outlier_percentile,
                backend_id,
            ]
        )
        kind = f"clusters-{body.pillar}"
        if state.store.has_artifact(ArtifactKey(kind, body.dataset_id, run_id)):
            return JSONResponse(
                status_code=200,
                content=state.completed(Stage.CLUSTERS, body.dataset_id, run_id).to_payload(),
            )
        descriptor, _ = state.launch(
            Stage.CLUSTERS,
            body.dataset_id,
            run_id,
            lambda: run_clusters(state.store, state.gateway, body.dataset_id, cluster_config, backend_id),
        )
        return descriptor.to_payload()

    @app.get("/runs/{run_id}")
    def get_run(run_id: str):
        with state.lock:
            descriptor = state.runs.get(run_id)
        if descriptor is None:
            raise HTTPException(status_code=404, detail=f"unknown run {run_id}")
        return descriptor.to_payload()

    @app.get("/personas")
    def get_personas(dataset_id: str):
        return {"dataset_id": dataset_id, "cards": [c.to_payload() for c in load_cards(state.store, dataset_id, PillarKind.AUDIENCE)]}

    @app.get("/challenges")
    def get_challenges(dataset_id: str):
        return {"dataset_id": dataset_id, "cards": [c.to_payload() for c in load_cards(state.store, dataset_id, PillarKind.INSIGHT)]}

    @app.post("/rank")
    def post_rank(body: RankIn):
        from .config import RankSettings
        from .domain import ContentKind, Objective

        settings = RankSettings(
            alpha=body.alpha,
            beta=body.beta,
            classifier=body.classifier,
            ensemble_runs=body.ensemble_runs,
            grounded=body.grounded,
            seed_base=body.seed_base,
        )
        subset = SubsetFilter(
            brands=frozenset({body.brand}) if body.brand else None,
            kind=ContentKind.AD,
            objective=Objective(body.objective) if body.objective else None,
        )
        ranked, label = run_ranking(
            state.store,
            state.gateway,
            body.dataset_id,
            body.ranker,
            settings,
            subset,
            body.backend or state.backend_id,
            temperature=state.config.gateway.temperature,
        )
        payload = ranked.to_payload()
        payload["label"] = label
        return payload

    @app.post("/evaluate")
    def post_evaluate(body: EvaluateIn):
        rows, report = run_evaluation(
            state.store,
            body.dataset_id,
            body.rankers,
            EvalConfig(relevance_size=body.relevance_size, cutoffs=tuple(sorted(body.cutoffs))),
        )
        return {
            "dataset_id": body.dataset_id,
            "rows": [r.to_payload() for r in rows],
            "report": report,
        }

    @app.get("/opportunities")
    def get_opportunities(dataset_id: str, own: str, competitor: str):
        return run_opportunities(state.store, dataset_id, own, competitor)

    @app.post("/stories")
    def post_story(body: StoryIn):
        story, brief, brief_path = run_story(
            state.store,
            state.gateway,
            body.dataset_id,
            body.persona_id,
            body.challenge_id,
            body.brand,
            state.backend_id,
        )
        payload = story.to_payload()
        payload["dataset_id"] = body.dataset_id
        payload["brief"] = brief
        payload["brief_path"] = str(brief_path)
        return payload

    @app.get("/spec")
    def get_spec():
        return app.openapi()

    return app
