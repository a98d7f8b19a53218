"""Request and response models shared by the HTTP service and the CLI."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class Overrides(BaseModel):
    """Per-request settings; unset fields fall back to the server's resolved settings."""

    mock_llm: Optional[bool] = None
    seed: Optional[int] = None
    clustering: Optional[Literal["two_step", "one_step"]] = None
    embed_dim: Optional[int] = Field(default=None, ge=2)


class BuildRequest(Overrides):
    corpus_dir: str
    index_dir: str


class AddRequest(Overrides):
    index_dir: str
    path: str
    doc_id: Optional[str] = None
    greedy: bool = False


class RemoveRequest(Overrides):
    index_dir: str
    doc_id: str
    recluster: bool = False


class QueryRequest(Overrides):
    index_dir: str
    query: str = Field(min_length=1)
    k: int = Field(default=10, ge=1)
    token_limit: int = Field(default=2000, ge=1)


class AskRequest(Overrides):
    index_dir: str
    query: str = Field(min_length=1)
    retriever: Literal["tree", "naive"] = "tree"
    k0: int = Field(default=20, ge=1)
    budget: int = Field(default=2000, ge=1)
    expand: bool = False
    answer: bool = False


class BenchRequest(Overrides):
    corpus_dir: str
    fraction: float = Field(default=0.7, gt=0, le=1)
    per_document: bool = False


class StatsModel(BaseModel):
    leaf_count: int
    internal_count: int
    cluster_size_mean: float
    cluster_size_std: float
    parents_per_leaf_mean: float
    parents_per_leaf_std: float
    layer_sizes: list[int]
    table: str


class BuildResponse(BaseModel):
    index_dir: str
    documents: int
    chunks: int
    summary_calls: int
    stats: StatsModel


class UpdateResponse(BaseModel):
    index_dir: str
    new_leaves: list[str]
    new_node_ids: list[str]
    removed_node_ids: list[str]
    changed_cluster_ids: dict[str, list[str]]
    resummarized_node_ids: list[str]
    summary_call_count: int
    new_layers_created: int
    split_attempts: int
    splits: int
    model_changed: bool


class Hit(BaseModel):
    node_id: str
    layer: int
    similarity: float
    token_count: int
    text: str


class QueryResponse(BaseModel):
    hits: list[Hit]
    total_tokens: int


class AskResponse(BaseModel):
    context: str
    context_tokens: int
    documents: list[str]
    clusters: int
    summary_calls: int
    query_used: str
    answer: Optional[str] = None
    answered: Optional[bool] = None


class BenchResponse(BaseModel):
    chunks: int
    initial_chunks: int
    initial_build_calls: int
    adrap_calls: int
    full_rebuild_calls: int
    adrap_total_calls: int
    rebuild_total_calls: int
    adrap_seconds: float
    rebuild_seconds: float
    table: str


class ErrorResponse(BaseModel):
    error: str
    detail: str
