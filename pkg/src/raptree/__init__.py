"""Hierarchical summary-tree retrieval with incremental maintenance and query-focused condensation."""

from raptree.adrap import UpdateReport, add_document, remove_chunks, remove_document, simulate_split_ingest
from raptree.embedding import MockEmbedder, RemoteEmbedder, cosine_similarity, mock_embed
from raptree.gmm import AdaptiveConfig, GmmModel, fit_best_k, fit_em, incremental_update
from raptree.persistence import load_index, save_index
from raptree.postqfrap import PostQfrapConfig, expand_query, run_postqfrap
from raptree.summarization import MockLlm, RemoteLlm, SummaryRequest, mock_summarize
from raptree.text import Chunk, ChunkingConfig, chunk_text, count_tokens, split_sentences
from raptree.tree import RaTree, build_tree, collapsed_query

__version__ = "0.1.0"

__all__ = [
    "AdaptiveConfig",
    "Chunk",
    "ChunkingConfig",
    "GmmModel",
    "MockEmbedder",
    "MockLlm",
    "PostQfrapConfig",
    "RaTree",
    "RemoteEmbedder",
    "RemoteLlm",
    "SummaryRequest",
    "UpdateReport",
    "add_document",
    "build_tree",
    "chunk_text",
    "collapsed_query",
    "cosine_similarity",
    "count_tokens",
    "expand_query",
    "fit_best_k",
    "fit_em",
    "incremental_update",
    "load_index",
    "mock_embed",
    "mock_summarize",
    "remove_chunks",
    "remove_document",
    "run_postqfrap",
    "save_index",
    "simulate_split_ingest",
    "split_sentences",
]
