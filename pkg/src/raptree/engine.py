"""Index operations behind both the CLI and the HTTP service, plus settings resolution."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from raptree.adrap import add_document, remove_document, simulate_split_ingest
from raptree.embedding import Embedder, MockEmbedder, RemoteEmbedder
from raptree.gmm import AdaptiveConfig
from raptree.persistence import IndexLock, LoadedIndex, load_index, save_index
from raptree.postqfrap import PostQfrapConfig, leaf_retriever, run_postqfrap, tree_retriever
from raptree.prompts import TEMPLATES
from raptree.remote import OpenAICompatClient
from raptree.schemas import (
    AskResponse,
    BenchResponse,
    BuildResponse,
    Hit,
    QueryResponse,
    StatsModel,
    UpdateResponse,
)
from raptree.stats import tree_stats
from raptree.summarization import MockLlm, RemoteChat, RemoteLlm, is_unanswered
from raptree.text import ChunkingConfig, chunk_corpus, chunk_text, iter_corpus
from raptree.tree import RaTree, build_tree, collapsed_query

ENV_VARS = {
    "RAPTREE_API_BASE": "api_base",
    "RAPTREE_CHAT_MODEL": "chat_model",
    "RAPTREE_EMBED_MODEL": "embed_model",
}


class EmptyCorpusError(ValueError):
    pass


class ConfigError(ValueError):
    pass


@dataclass
class Settings:
    mock_llm: bool = False
    seed: int = 0
    clustering: str = "two_step"
    embed_dim: int = 64
    k: int = 10
    token_limit: int = 2000
    k0: int = 20
    budget: int = 2000
    expand: bool = False
    answer: bool = False
    retriever: str = "tree"
    greedy: bool = False
    recluster_on_delete: bool = False
    fraction: float = 0.7
    api_base: str = "https://api.openai.com"
    api_key_env: str = "RAPTREE_API_KEY"
    chat_model: str = "gpt-4o-mini-2024-07-18"
    embed_model: str = "text-embedding-3-large"
    timeout_s: float = 60.0
    max_retries: int = 4
    parallelism: int = 4

    def updated(self, **values: Any) -> "Settings":
        return dataclasses.replace(self, **{k: v for k, v in values.items() if v is not None})


def _coerce(name: str, raw: Any) -> Any:
    field_type = type(getattr(Settings(), name))
    if field_type is bool and isinstance(raw, str):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    try:
        return field_type(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def resolve_settings(
    flags: Mapping[str, Any] | None = None,
    env: Mapping[str, str] | None = None,
    config_file: str | Path | None = None,
) -> Settings:
    """Defaults, then the JSON config file, then environment variables, then flags."""
    known = {f.name for f in dataclasses.fields(Settings)}
    values: dict[str, Any] = {}
    if config_file:
        try:
            data = json.loads(Path(config_file).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {config_file}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold one JSON object")
        for key, raw in data.items():
            name = key.replace("-", "_")
            if name not in known:
                raise ConfigError(f"unknown config key {key!r}")
            values[name] = _coerce(name, raw)
    env = os.environ if env is None else env
    for var, name in ENV_VARS.items():
        if env.get(var):
            values[name] = env[var]
    for name, raw in (flags or {}).items():
        if raw is not None and name in known:
            values[name] = _coerce(name, raw)
    return Settings(**values)


def make_embedder(settings: Settings, dim: int | None = None) -> Embedder:
    dim = dim or settings.embed_dim
    if settings.mock_llm:
        return MockEmbedder(dim)
    return RemoteEmbedder(_client(settings), settings.embed_model, dim, parallelism=settings.parallelism)


def make_llm(settings: Settings) -> MockLlm | RemoteLlm:
    if settings.mock_llm:
        return MockLlm()
    chat = RemoteChat(_client(settings), settings.chat_model)
    return RemoteLlm(chat, max_parallel=settings.parallelism)


def _client(settings: Settings) -> OpenAICompatClient:
    return OpenAICompatClient(
        settings.api_base,
        os.environ.get(settings.api_key_env),
        timeout_s=settings.timeout_s,
        max_retries=settings.max_retries,
    )


def stats_model(tree: RaTree, name: str = "index") -> StatsModel:
    st = tree_stats(tree)
    return StatsModel(**st.to_dict(), table=st.table(name))


def _save(tree: RaTree, index_dir: str | Path, embedder: Embedder, manifest: dict[str, Any] | None, settings: Settings) -> None:
    save_index(
        tree,
        index_dir,
        embedder.name,
        embedder.dim,
        ChunkingConfig(),
        TEMPLATES,
        created=None if manifest is None else manifest.get("created"),
        extra={"mock_llm": settings.mock_llm},
    )


def open_index(index_dir: str | Path, settings: Settings) -> tuple[LoadedIndex, Embedder]:
    loaded = load_index(index_dir)
    return loaded, make_embedder(settings, loaded.manifest["embedder"]["dim"])


def build_index(corpus_dir: str | Path, index_dir: str | Path, settings: Settings) -> BuildResponse:
    docs = list(iter_corpus(corpus_dir))
    chunks = chunk_corpus(docs)
    if not chunks:
        raise EmptyCorpusError(f"no documents in {corpus_dir}")
    embedder = make_embedder(settings)
    llm = make_llm(settings)
    with IndexLock(index_dir):
        tree = build_tree(
            chunks,
            embedder,
            llm,
            clustering_mode=settings.clustering,  # type: ignore[arg-type]
            seed=settings.seed,
            parallelism=settings.parallelism,
        )
        _save(tree, index_dir, embedder, None, settings)
    return BuildResponse(
        index_dir=str(index_dir),
        documents=len(docs),
        chunks=len(chunks),
        summary_calls=llm.calls,
        stats=stats_model(tree, Path(index_dir).name),
    )


def _update_response(index_dir: str | Path, report: Any, new_leaves: list[str]) -> UpdateResponse:
    d = report.to_dict()
    return UpdateResponse(index_dir=str(index_dir), new_leaves=new_leaves, **d)


def add_file(
    index_dir: str | Path, path: str | Path, settings: Settings, doc_id: str | None = None
) -> UpdateResponse:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    doc_id = doc_id or path.name
    chunks = chunk_text(doc_id, text)
    if not chunks:
        raise EmptyCorpusError(f"no text in {path}")
    with IndexLock(index_dir):
        loaded, embedder = open_index(index_dir, settings)
        tree = loaded.tree
        if any(tree.nodes[n].doc_id == doc_id for n in tree.leaves()):
            raise ValueError(f"document {doc_id!r} is already indexed; remove it first")
        llm = make_llm(settings)
        cfg = AdaptiveConfig.for_initial_size(len(tree.leaves()))
        report = add_document(tree, chunks, embedder, llm, cfg, "greedy" if settings.greedy else "adaptive")
        tree.validate()
        _save(tree, index_dir, embedder, loaded.manifest, settings)
    return _update_response(index_dir, report, [c.id for c in chunks])


def remove_doc(index_dir: str | Path, doc_id: str, settings: Settings) -> UpdateResponse:
    with IndexLock(index_dir):
        loaded, embedder = open_index(index_dir, settings)
        tree = loaded.tree
        llm = make_llm(settings)
        report = remove_document(tree, doc_id, embedder, llm, settings.recluster_on_delete)
        tree.validate()
        _save(tree, index_dir, embedder, loaded.manifest, settings)
    return _update_response(index_dir, report, [])


def query_tree(tree: RaTree, embedder: Embedder, query: str, k: int, token_limit: int) -> QueryResponse:
    hits = collapsed_query(tree, embedder.embed([query])[0], k, token_limit)
    return QueryResponse(
        hits=[Hit(node_id=h.node_id, layer=h.layer, similarity=h.similarity, token_count=h.token_count, text=h.text) for h in hits],
        total_tokens=sum(h.token_count for h in hits),
    )


def query_index(index_dir: str | Path, query: str, settings: Settings) -> QueryResponse:
    loaded, embedder = open_index(index_dir, settings)
    return query_tree(loaded.tree, embedder, query, settings.k, settings.token_limit)


def ask_tree(tree: RaTree, embedder: Embedder, query: str, settings: Settings) -> AskResponse:
    llm = make_llm(settings)
    retriever = leaf_retriever(tree, embedder) if settings.retriever == "naive" else tree_retriever(tree, embedder)
    cfg = PostQfrapConfig(k0=settings.k0, budget=settings.budget, expand_query=settings.expand)
    result = run_postqfrap(retriever, query, cfg, embedder, llm, settings.seed, keyword_model=llm)
    response = AskResponse(
        context=result.summary,
        context_tokens=result.token_count,
        documents=[d.id for d in result.documents],
        clusters=result.clusters,
        summary_calls=result.summary_calls,
        query_used=result.query_used,
    )
    if settings.answer:
        answer = llm.answer(result.summary, query)
        response.answer = answer
        response.answered = not is_unanswered(answer)
    return response


def ask_index(index_dir: str | Path, query: str, settings: Settings) -> AskResponse:
    loaded, embedder = open_index(index_dir, settings)
    return ask_tree(loaded.tree, embedder, query, settings)


def index_stats(index_dir: str | Path, settings: Settings) -> StatsModel:
    loaded = load_index(index_dir)
    return stats_model(loaded.tree, Path(index_dir).name)


def bench_table(res: Any) -> str:
    rows = [
        ("", "adRAP", "full tree computed twice"),
        ("summary calls", str(res.adrap_total_calls), str(res.initial_build_calls + res.full_rebuild_calls)),
        ("  incremental vs rebuild", str(res.adrap_calls), str(res.full_rebuild_calls)),
        ("time after initial build (s)", f"{res.adrap_seconds:.2f}", f"{res.rebuild_seconds:.2f}"),
    ]
    w = [max(len(r[i]) for r in rows) for i in range(3)]
    lines = [" | ".join(c.ljust(w[i]) for i, c in enumerate(r)) for r in rows]
    lines.insert(1, "-+-".join("-" * x for x in w))
    lines.append(f"chunks: {res.n_chunks} ({res.n_initial} initial, {res.n_chunks - res.n_initial} inserted)")
    return "\n".join(lines)


def bench_split(corpus_dir: str | Path, settings: Settings, per_document: bool = False) -> BenchResponse:
    chunks = chunk_corpus(list(iter_corpus(corpus_dir)))
    if not chunks:
        raise EmptyCorpusError(f"no documents in {corpus_dir}")
    embedder = make_embedder(settings)
    res = simulate_split_ingest(
        chunks,
        embedder,
        lambda: make_llm(settings),
        fraction=settings.fraction,
        seed=settings.seed,
        mode="greedy" if settings.greedy else "adaptive",
        per_document=per_document,
    )
    return BenchResponse(
        chunks=res.n_chunks,
        initial_chunks=res.n_initial,
        initial_build_calls=res.initial_build_calls,
        adrap_calls=res.adrap_calls,
        full_rebuild_calls=res.full_rebuild_calls,
        adrap_total_calls=res.adrap_total_calls,
        rebuild_total_calls=res.initial_build_calls + res.full_rebuild_calls,
        adrap_seconds=res.adrap_seconds,
        rebuild_seconds=res.rebuild_seconds,
        table=bench_table(res),
    )
