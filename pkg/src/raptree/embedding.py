from __future__ import annotations

import hashlib
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Protocol, Sequence

import numpy as np

from raptree.remote import MalformedResponseError, OpenAICompatClient


class Embedder(Protocol):
    name: str
    dim: int

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        """Return a (len(texts), dim) float64 array."""
        ...


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def cosine_similarities(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Cosine similarity of every row of ``matrix`` with ``query``."""
    matrix = np.asarray(matrix, dtype=float)
    query = np.asarray(query, dtype=float)
    if matrix.ndim != 2 or matrix.shape[1] != query.shape[-1]:
        raise ValueError(f"dimension mismatch: {matrix.shape} vs {query.shape}")
    qn = np.linalg.norm(query)
    rn = np.linalg.norm(matrix, axis=1)
    if qn == 0.0 or np.any(rn == 0.0):
        raise ValueError("cosine similarity undefined for a zero vector")
    # row-wise reduction rather than BLAS gemv, so identical rows score identically and ties stay ties
    return np.clip((matrix * query).sum(axis=1) / (rn * qn), -1.0, 1.0)


def _bucket(gram: str, dim: int) -> int:
    digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % dim


def mock_embed(text: str, dim: int = 64) -> np.ndarray:
    """Hash lowercased character trigrams into ``dim`` buckets and L2-normalize.

    Texts shorter than three characters hash as a single gram, so the result is
    never the zero vector.
    """
    if dim < 2:
        raise ValueError("dim must be >= 2")
    s = text.lower()
    grams = [s[i: i + 3] for i in range(len(s) - 2)] or [s]
    vec = np.zeros(dim)
    for gram in grams:
        vec[_bucket(gram, dim)] += 1.0
    return vec / np.linalg.norm(vec)


class MockEmbedder:
    def __init__(self, dim: int = 64):
        if dim < 2:
            raise ValueError("dim must be >= 2")
        self.dim = dim
        self.name = f"mock-trigram-{dim}"
        self._memo: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.empty((len(texts), self.dim))
        for i, text in enumerate(texts):
            with self._lock:
                vec = self._memo.get(text)
            if vec is None:
                vec = mock_embed(text, self.dim)
                with self._lock:
                    self._memo[text] = vec
            out[i] = vec
        return out


class RemoteEmbedder:
    """Batches texts to an OpenAI-compatible ``/v1/embeddings`` endpoint."""

    def __init__(
        self,
        client: OpenAICompatClient,
        model: str,
        dim: int,
        batch_size: int = 64,
        parallelism: int = 4,
    ):
        self.client = client
        self.model = model
        self.dim = dim
        self.name = f"remote-{model}"
        self.batch_size = batch_size
        self.parallelism = max(1, parallelism)
        self._memo: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def _embed_batch(self, batch: list[str]) -> list[list[float]]:
        return self.client.embeddings(self.model, batch)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        texts = list(texts)
        if not texts:
            return np.empty((0, self.dim))
        with self._lock:
            missing = sorted({t for t in texts if t not in self._memo})
        batches = [missing[i: i + self.batch_size] for i in range(0, len(missing), self.batch_size)]
        if batches:
            with ThreadPoolExecutor(max_workers=min(self.parallelism, len(batches))) as pool:
                results = list(pool.map(self._embed_batch, batches))
            for batch, vectors in zip(batches, results):
                for text, vec in zip(batch, vectors):
                    arr = np.asarray(vec, dtype=float)
                    if arr.shape != (self.dim,) or not np.all(np.isfinite(arr)):
                        raise MalformedResponseError(
                            f"embedding has shape {arr.shape}, expected ({self.dim},)"
                        )
                    with self._lock:
                        self._memo[text] = arr
        with self._lock:
            return np.stack([self._memo[t] for t in texts])
