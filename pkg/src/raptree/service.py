"""HTTP service exposing index operations; the CLI can talk to it with ``--server``."""

from __future__ import annotations

import os
import threading
from pathlib import Path
from typing import Any, Callable, TypeVar

import uvicorn
from fastapi import FastAPI, Query
from fastapi.responses import JSONResponse

from raptree import engine
from raptree.adrap import MissingModelsError, UnknownNodeError
from raptree.embedding import Embedder
from raptree.persistence import (
    CorruptIndexError,
    DimensionMismatchError,
    IncompatibleDirectoryError,
    LoadedIndex,
    LockedError,
    VersionError,
)
from raptree.postqfrap import EmptyRetrievalError
from raptree.remote import RemoteAuthError, RemoteError
from raptree.schemas import (
    AddRequest,
    AskRequest,
    AskResponse,
    BenchRequest,
    BenchResponse,
    BuildRequest,
    BuildResponse,
    Overrides,
    QueryRequest,
    QueryResponse,
    RemoveRequest,
    StatsModel,
    UpdateResponse,
)

T = TypeVar("T")

# most specific first
ERROR_STATUS: list[tuple[type[BaseException], int]] = [
    (LockedError, 409),
    (VersionError, 409),
    (CorruptIndexError, 422),
    (DimensionMismatchError, 422),
    (IncompatibleDirectoryError, 409),
    (MissingModelsError, 409),
    (UnknownNodeError, 404),
    (FileNotFoundError, 404),
    (engine.EmptyCorpusError, 422),
    (EmptyRetrievalError, 422),
    (RemoteAuthError, 502),
    (RemoteError, 502),
    (ValueError, 400),
]


def status_for(exc: BaseException) -> int:
    for cls, status in ERROR_STATUS:
        if isinstance(exc, cls):
            return status
    return 500


class SnapshotCache:
    """Last committed index per directory, reloaded when the manifest changes on disk."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._entries: dict[tuple[str, bool], tuple[int, LoadedIndex, Embedder]] = {}

    def get(self, index_dir: str, settings: engine.Settings) -> tuple[LoadedIndex, Embedder]:
        path = os.path.realpath(index_dir)
        key = (path, settings.mock_llm)
        stamp = self._stamp(path)
        with self._lock:
            hit = self._entries.get(key)
            if hit and hit[0] == stamp:
                return hit[1], hit[2]
        loaded, embedder = engine.open_index(index_dir, settings)
        with self._lock:
            self._entries[key] = (stamp, loaded, embedder)
        return loaded, embedder

    def invalidate(self, index_dir: str) -> None:
        path = os.path.realpath(index_dir)
        with self._lock:
            for key in [k for k in self._entries if k[0] == path]:
                del self._entries[key]

    @staticmethod
    def _stamp(path: str) -> int:
        try:
            return Path(path, "manifest.json").stat().st_mtime_ns
        except FileNotFoundError:
            return -1


def _settings_for(base: engine.Settings, req: Overrides, **extra: Any) -> engine.Settings:
    return base.updated(
        mock_llm=req.mock_llm, seed=req.seed, clustering=req.clustering, embed_dim=req.embed_dim, **extra
    )


def create_app(settings: engine.Settings | None = None) -> FastAPI:
    base = settings or engine.resolve_settings()
    cache = SnapshotCache()
    writers: dict[str, threading.Lock] = {}
    writers_guard = threading.Lock()
    app = FastAPI(title="raptree", version="0.1.0")

    def writer_lock(index_dir: str) -> threading.Lock:
        with writers_guard:
            return writers.setdefault(os.path.realpath(index_dir), threading.Lock())

    def write(index_dir: str, op: Callable[[], T]) -> T:
        with writer_lock(index_dir):
            try:
                return op()
            finally:
                cache.invalidate(index_dir)

    @app.exception_handler(Exception)
    async def _errors(_request: Any, exc: Exception) -> JSONResponse:
        return JSONResponse(
            status_code=status_for(exc), content={"error": type(exc).__name__, "detail": str(exc)}
        )

    @app.get("/health")
    def health() -> dict[str, str]:
        return {"status": "ok"}

    @app.post("/build", response_model=BuildResponse)
    def build(req: BuildRequest) -> BuildResponse:
        s = _settings_for(base, req)
        return write(req.index_dir, lambda: engine.build_index(req.corpus_dir, req.index_dir, s))

    @app.post("/add", response_model=UpdateResponse)
    def add(req: AddRequest) -> UpdateResponse:
        s = _settings_for(base, req, greedy=req.greedy)
        return write(req.index_dir, lambda: engine.add_file(req.index_dir, req.path, s, req.doc_id))

    @app.post("/remove", response_model=UpdateResponse)
    def remove(req: RemoveRequest) -> UpdateResponse:
        s = _settings_for(base, req, recluster_on_delete=req.recluster)
        return write(req.index_dir, lambda: engine.remove_doc(req.index_dir, req.doc_id, s))

    @app.post("/query", response_model=QueryResponse)
    def query(req: QueryRequest) -> QueryResponse:
        s = _settings_for(base, req)
        loaded, embedder = cache.get(req.index_dir, s)
        return engine.query_tree(loaded.tree, embedder, req.query, req.k, req.token_limit)

    @app.post("/ask", response_model=AskResponse)
    def ask(req: AskRequest) -> AskResponse:
        s = _settings_for(
            base, req, retriever=req.retriever, k0=req.k0, budget=req.budget, expand=req.expand, answer=req.answer
        )
        loaded, embedder = cache.get(req.index_dir, s)
        return engine.ask_tree(loaded.tree, embedder, req.query, s)

    @app.get("/stats", response_model=StatsModel)
    def stats(index_dir: str = Query(...)) -> StatsModel:
        loaded, _ = cache.get(index_dir, base)
        return engine.stats_model(loaded.tree, Path(index_dir).name)

    @app.post("/bench-split", response_model=BenchResponse)
    def bench(req: BenchRequest) -> BenchResponse:
        s = _settings_for(base, req, fraction=req.fraction)
        return engine.bench_split(req.corpus_dir, s, req.per_document)

    return app


def serve(settings: engine.Settings, host: str = "127.0.0.1", port: int = 8765) -> None:
    uvicorn.run(create_app(settings), host=host, port=port, log_level="info")
