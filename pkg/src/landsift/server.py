"""HTTP/JSON service over a project directory.

Exposes the annotation loop (batch, labels, status per label space) and
the geographic queries backed by the restriction graph. Each label
space has a single-writer session: label submission commits to disk
first, then retrains in a background thread; readers are never blocked.
"""

from __future__ import annotations

import logging
import threading
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from pydantic import BaseModel

from . import active_learning as al
from . import geograph
from .classifier import FeaturePool, ModelSnapshot
from .fileio import read_json
from .labels import DEFAULT_SCHEMA, RESTRICTIONS, TOPICS
from .project import Project, ProjectError

log = logging.getLogger("landsift.server")

_SPACES = (RESTRICTIONS, TOPICS)
RETRY_AFTER = {"Retry-After": "1"}


class SubmitPayload(BaseModel):
    # sentence id -> list of label names from the session's space
    assignments: dict[str, list[str]]


class _CachedFile:
    """Lazy loader with mtime invalidation, so CLI rebuilds show up."""

    def __init__(self, path: Path, loader: Callable[[Path], object]):
        self.path = path
        self.loader = loader
        self.lock = threading.Lock()
        self.mtime: Optional[int] = None
        self.value: object = None

    def get(self) -> tuple[object, int]:
        """Returns (value, version); version 0 while the file is absent."""
        with self.lock:
            if not self.path.exists():
                self.mtime = None
                self.value = None
                return None, 0
            mtime = self.path.stat().st_mtime_ns
            if mtime != self.mtime:
                self.value = self.loader(self.path)
                self.mtime = mtime
            return self.value, self.mtime


class Session:
    """One label space's live AL loop."""

    def __init__(
        self,
        project: Project,
        space: str,
        state: al.ALState,
        config: al.ALConfig,
        pool: FeaturePool,
        validation,
        texts: dict[str, str],
    ):
        self.project = project
        self.space = space
        self.state = state
        self.config = config
        self.pool = pool
        self.validation = validation
        self.texts = texts
        self.pending: Optional[list[al.QueryItem]] = None
        self.training = False
        self.lock = threading.Lock()

    @property
    def dirty(self) -> bool:
        # a committed batch whose retrain never finished
        h = self.state.history
        return bool(h) and h[-1].get("model_version") is None

    def job_id(self) -> str:
        return f"{self.space}-{self.state.iteration}"

    def start_retrain(self) -> None:
        self.training = True
        threading.Thread(target=self._retrain, daemon=True).start()

    def _retrain(self) -> None:
        try:
            model = al.retrain(self.state, self.config, self.pool, self.validation)
            with self.lock:
                if self.state.history:
                    last = self.state.history[-1]
                    last["model_version"] = model.version
                    last["monitor_loss"] = model.provenance.get("monitor_loss")
                self.project.save_al_state(self.state, self.config)
        except Exception:
            log.exception("retraining failed for %s", self.space)
        finally:
            self.training = False


def _fresh_session(project: Project, space: str) -> Session:
    """Start a session from the seed baseline when no checkpoint exists."""
    model_path = project.model_file(space)
    if not model_path.exists():
        raise HTTPException(404, f"no active {space} session and no baseline model")
    model = ModelSnapshot.load(model_path)
    dataset = project.dataset()
    splits = project.splits()
    by_id = {d.sentence_id: d for d in dataset}
    labeled = {i: by_id[i].labels.vector(space) for i in splits.train}
    valid = project.valid_sentences()
    unlabeled = {s.sentence_id for s in valid} - {d.sentence_id for d in dataset}

    cfg_file = project.root / "al-config.json"
    if cfg_file.exists():
        config = al.ALConfig.from_json({**read_json(cfg_file), "label_space": space})
    else:
        config = al.ALConfig(label_space=space)
    state = al.ALState(space, labeled=labeled, unlabeled=unlabeled, model=model)
    return _build_session(project, space, state, config)


def _build_session(
    project: Project, space: str, state: al.ALState, config: al.ALConfig
) -> Session:
    dataset = project.dataset()
    splits = project.splits()
    valid = project.valid_sentences()
    texts = {s.sentence_id: s.text for s in valid}
    for d in dataset:
        texts.setdefault(d.sentence_id, d.text)
    pool = FeaturePool.build(texts, dim=state.model.dim)
    by_id = {d.sentence_id: d for d in dataset}
    ids = splits.validation
    validation = (
        pool.rows(ids),
        np.array([by_id[i].labels.vector(space) for i in ids], dtype=float),
    )
    return Session(project, space, state, config, pool, validation, texts)


def build_app(project: Project) -> FastAPI:
    app = FastAPI(title="landsift", docs_url=None, redoc_url=None)
    sessions: dict[str, Session] = {}
    sessions_lock = threading.Lock()
    graph_cache = _CachedFile(project.graph_file, geograph.load_graph)
    weather_cache = _CachedFile(project.weather_file, read_json)
    isoband_cache = _CachedFile(project.weather_file, geograph.load_isobands)

    def get_session(space: str) -> Session:
        if space not in _SPACES:
            raise HTTPException(404, f"unknown label space {space!r}")
        with sessions_lock:
            session = sessions.get(space)
            if session is None:
                try:
                    if project.al_state_file(space).exists():
                        state, config = project.al_state(space)
                        session = _build_session(project, space, state, config)
                    else:
                        session = _fresh_session(project, space)
                except ProjectError as exc:
                    raise HTTPException(404, f"no active {space} session: {exc}")
                sessions[space] = session
        if session.dirty and not session.training:
            # crashed between submit and retrain; labels are committed,
            # so just pick the training back up
            with session.lock:
                if session.dirty and not session.training:
                    session.start_retrain()
        return session

    def get_graph(require: bool = True) -> geograph.Graph:
        graph, version = graph_cache.get()
        if graph is None and require:
            raise HTTPException(404, "no graph; run `graph build` first")
        return graph

    @app.middleware("http")
    async def version_headers(request: Request, call_next):
        response = await call_next(request)
        versions = []
        for space in _SPACES:
            session = sessions.get(space)
            versions.append(f"{space}={session.state.model.version if session else 0}")
        response.headers["X-Model-Version"] = ",".join(versions)
        _, graph_version = graph_cache.get()
        response.headers["X-Graph-Version"] = str(graph_version)
        return response

    # ------------------------------------------------------------------
    # Annotation loop

    @app.get("/api/al/{space}/batch")
    def get_batch(space: str):
        session = get_session(space)
        if session.training:
            raise HTTPException(503, "training in progress", headers=RETRY_AFTER)
        with session.lock:
            if session.pending is None:
                session.pending = al.propose_batch(
                    session.state, session.config, session.pool
                )
            batch = session.pending
        return {
            "label_space": space,
            "labels": list(DEFAULT_SCHEMA.space(space)),
            "iteration": session.state.iteration,
            "batch": [
                {**item.to_json(), "text": session.texts.get(item.sentence_id, "")}
                for item in batch
            ],
        }

    @app.post("/api/al/{space}/labels")
    def submit_labels(space: str, payload: SubmitPayload):
        session = get_session(space)
        labels = DEFAULT_SCHEMA.space(space)
        if not session.lock.acquire(blocking=False):
            raise HTTPException(409, "concurrent submission", headers=RETRY_AFTER)
        try:
            if session.training:
                raise HTTPException(409, "training in progress", headers=RETRY_AFTER)
            if session.pending is None:
                raise HTTPException(409, "no pending batch; fetch the batch first")
            assignments = {}
            for sid, names in payload.assignments.items():
                unknown = set(names) - set(labels)
                if unknown:
                    raise HTTPException(400, f"unknown labels {sorted(unknown)} for {sid}")
                assignments[sid] = tuple(int(n in names) for n in labels)
            try:
                al.commit_batch(session.state, session.pending, assignments)
            except al.ALError as exc:
                raise HTTPException(409, str(exc))
            record = {
                "iteration": session.state.iteration,
                "batch": [b.sentence_id for b in session.pending],
                "labels": {sid: list(assignments[sid]) for sid in sorted(assignments)},
                "model_version": None,
                "monitor_loss": None,
                "labeled_size": len(session.state.labeled),
            }
            session.state.history.append(record)
            session.state.iteration += 1
            session.pending = None
            # committed before training starts: a crash now loses nothing
            session.project.ensure()
            session.project.save_al_state(session.state, session.config)
            session.start_retrain()
            return {
                "iteration": session.state.iteration,
                "job_id": session.job_id(),
                "labeled": len(session.state.labeled),
            }
        finally:
            session.lock.release()

    @app.get("/api/al/{space}/status")
    def al_status(space: str):
        session = get_session(space)
        return {
            "label_space": space,
            "iteration": session.state.iteration,
            "labeled": len(session.state.labeled),
            "unlabeled": len(session.state.unlabeled),
            "model_version": session.state.model.version,
            "training": session.training,
            "job_id": session.job_id(),
            "pending_batch": session.pending is not None,
        }

    # ------------------------------------------------------------------
    # Geographic queries

    @app.get("/api/areas")
    def list_areas():
        graph = get_graph()
        out = []
        for area_id in graph.area_ids():
            payload = graph.area(area_id).payload
            out.append(
                {
                    "area_id": area_id,
                    "category": payload["category"],
                    "properties": payload["properties"],
                    "n_documents": len(graph.docs_of_area(area_id)),
                }
            )
        return {"areas": out}

    @app.get("/api/areas/{area_id}/report")
    def area_report(area_id: str, weather: int = 0):
        graph = get_graph()
        try:
            payload = graph.area(area_id).payload
            groups = geograph.restrictions_by_area(graph, area_id)
        except geograph.GeoError as exc:
            raise HTTPException(404, str(exc))
        topics = sorted(
            {e["topic"] for entries in groups.values() for e in entries}
        )
        similar = {
            t: sorted(geograph.similar_areas(graph, t) - {area_id}) for t in topics
        }
        out = {
            "area_id": area_id,
            "category": payload["category"],
            "properties": payload["properties"],
            "documents": graph.docs_of_area(area_id),
            "restrictions": groups,
            "similar_areas": similar,
        }
        if weather:
            bands, _ = isoband_cache.get()
            out["weather_bands"] = (
                geograph.weather_overlay(graph, area_id, bands) if bands else []
            )
        return out

    @app.get("/api/topics/{topic}/areas")
    def topic_areas(topic: str):
        graph = get_graph()
        try:
            areas = geograph.similar_areas(graph, topic)
        except geograph.GeoError as exc:
            raise HTTPException(404, str(exc))
        return {"topic": topic, "areas": sorted(areas)}

    @app.get("/api/docs/{doc_id}")
    def get_document(doc_id: str):
        metas = project.metas()
        meta = metas.get(doc_id)
        if meta is None:
            raise HTTPException(404, f"unknown document {doc_id!r}")
        try:
            text = project.doc_text(doc_id)
        except ProjectError as exc:
            raise HTTPException(404, str(exc))
        return {
            "doc_id": meta.doc_id,
            "title": meta.title,
            "region": meta.region,
            "area_ids": list(meta.area_ids),
            "text": text,
        }

    @app.get("/api/geo/features.geojson")
    def geo_features():
        graph = get_graph()
        return geograph.areas_geojson(graph)

    @app.get("/api/geo/weather.geojson")
    def geo_weather():
        weather, _ = weather_cache.get()
        if weather is None:
            raise HTTPException(404, "no weather isobands in this project")
        return weather

    return app
