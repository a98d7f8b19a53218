"""Post-retrieval query-focused summarization over any retriever, with optional query expansion."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

import numpy as np

from raptree.embedding import Embedder, cosine_similarities
from raptree.summarization import Summarizer, SummaryRequest
from raptree.text import DEFAULT_COUNTER, Chunk, TokenCounter, chunk_id
from raptree.tree import RaTree, build_tree, collapsed_query

EXPANSION_REPEATS = 5
EXPANSION_DOCS = 3
KEYWORD_MAX_TOKENS = 100


@dataclass(frozen=True)
class Document:
    id: str
    text: str


# (k, query) -> up to k documents, best first
Retriever = Callable[[int, str], list[Document]]


class KeywordModel(Protocol):
    def keywords(self, context: str, question: str, max_tokens: int = KEYWORD_MAX_TOKENS) -> str: ...


class EmptyRetrievalError(RuntimeError):
    pass


@dataclass(frozen=True)
class PostQfrapConfig:
    k0: int = 20
    budget: int = 2000
    expand_query: bool = False
    clustering: str = "one_step"

    def __post_init__(self) -> None:
        if self.k0 < 1 or self.budget < 1:
            raise ValueError("k0 and budget must be >= 1")
        if self.clustering != "one_step":
            raise ValueError("the post-retrieval tree uses one-step clustering")


@dataclass
class PostQfrapResult:
    summary: str
    token_count: int
    documents: list[Document]
    clusters: int
    summary_calls: int
    query_used: str
    layers: list[int]


def naive_retriever(
    ids: Sequence[str], texts: Sequence[str], embeddings: np.ndarray, embedder: Embedder
) -> Retriever:
    """Top-k over a flat set of texts by cosine similarity, ties broken by id."""
    ids, texts = list(ids), list(texts)
    matrix = np.asarray(embeddings, dtype=float)

    def retrieve(k: int, query: str) -> list[Document]:
        if not ids:
            return []
        sims = cosine_similarities(matrix, embedder.embed([query])[0])
        order = sorted(range(len(ids)), key=lambda j: (-sims[j], ids[j]))[:k]
        return [Document(ids[j], texts[j]) for j in order]

    return retrieve


def leaf_retriever(tree: RaTree, embedder: Embedder) -> Retriever:
    leaves = tree.leaves()
    matrix = np.vstack([tree.nodes[i].embedding for i in leaves]) if leaves else np.empty((0, 0))
    return naive_retriever(leaves, [tree.nodes[i].text for i in leaves], matrix, embedder)


def tree_retriever(tree: RaTree, embedder: Embedder) -> Retriever:
    """Collapsed-tree retrieval with no token limit."""

    def retrieve(k: int, query: str) -> list[Document]:
        if tree.is_empty():
            return []
        hits = collapsed_query(tree, embedder.embed([query])[0], k, token_threshold=None)
        return [Document(h.node_id, h.text) for h in hits]

    return retrieve


def expand_query(retriever: Retriever, query: str, llm: KeywordModel) -> str:
    docs = retriever(EXPANSION_DOCS, query)
    context = "\n\n".join(d.text for d in docs)
    keywords = llm.keywords(context, query, KEYWORD_MAX_TOKENS).strip()
    parts = [query] * EXPANSION_REPEATS + ([keywords] if keywords else [])
    return " ".join(parts)


def _as_chunks(docs: Sequence[Document], counter: TokenCounter) -> list[Chunk]:
    # retrieved texts become the leaves of a throwaway tree; ids stay unique even if
    # the retriever returns the same text twice
    return [
        Chunk(chunk_id(d.id, i, d.text), d.id, i, d.text, counter.count(d.text))
        for i, d in enumerate(docs)
    ]


def run_postqfrap(
    retriever: Retriever,
    query: str,
    cfg: PostQfrapConfig,
    embedder: Embedder,
    summarizer: Summarizer,
    seed: int = 0,
    keyword_model: KeywordModel | None = None,
    counter: TokenCounter = DEFAULT_COUNTER,
) -> PostQfrapResult:
    if not query.strip():
        raise ValueError("query must be non-empty")
    used = query
    if cfg.expand_query:
        if keyword_model is None:
            raise ValueError("query expansion needs a keyword model")
        used = expand_query(retriever, query, keyword_model)
    docs = retriever(cfg.k0, used)
    if not docs:
        raise EmptyRetrievalError("retriever returned no documents")
    start_calls = summarizer.calls
    tree = build_tree(
        _as_chunks(docs, counter),
        embedder,
        summarizer,
        clustering_mode="one_step",
        summary_mode="query_focused",
        query=query,
        seed=seed,
        counter=counter,
    )
    top = sorted(tree.top)
    context = "\n\n".join(tree.nodes[n].text for n in top)
    final = summarizer.summarize(SummaryRequest(context, query, cfg.budget))
    final = counter.truncate(final, cfg.budget)
    clusters = sum(len(layer) for layer in tree.layers[1:])
    return PostQfrapResult(
        summary=final,
        token_count=counter.count(final),
        documents=list(docs),
        clusters=clusters,
        summary_calls=summarizer.calls - start_calls,
        query_used=used,
        layers=[len(layer) for layer in tree.layers],
    )
