"""Global-then-local clustering of embeddings, and the single-pass local variant."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from raptree.gmm import GmmModel, Seed, extend_seed, fit_best_k, soft_assign_all
from raptree.reduction import ReducerModel, fit_reducer

LOCAL_NEIGHBORS = 10
TARGET_DIM = 10
MIN_LOCAL_SIZE = 3
ASSIGN_THRESHOLD = 0.1


def k_upper(n: int) -> int:
    return min(n, max(50, math.ceil(math.sqrt(n))))


@dataclass
class LocalClustering:
    """Local fit inside one global cluster.

    ``members`` index the clustered inputs; ``clusters[j]`` lists positions into
    ``members``. Groups below the minimum size carry no reducer or model and form
    one cluster.
    """

    members: list[int]
    reducer: ReducerModel | None
    model: GmmModel | None
    points: np.ndarray
    clusters: list[list[int]]


@dataclass
class ClusteringResult:
    clusters: list[list[int]]
    origins: list[tuple[int, int]]  # (global cluster, local cluster) of each entry in clusters
    locals: list[LocalClustering]
    global_model: GmmModel | None = None
    global_reducer: ReducerModel | None = None
    global_members: list[list[int]] = field(default_factory=list)

    @property
    def k_final(self) -> int:
        return len(self.clusters)


def fit_local(
    embeddings: np.ndarray,
    members: list[int],
    seed: Seed,
    min_size: int = MIN_LOCAL_SIZE,
    **em_kwargs: Any,
) -> LocalClustering:
    m = len(members)
    if m < min_size:
        clusters = [list(range(m))] if m else []
        return LocalClustering(list(members), None, None, np.empty((0, 0)), clusters)
    reducer = fit_reducer(embeddings[members], LOCAL_NEIGHBORS, TARGET_DIM)
    points = reducer.train_low
    model = fit_best_k(points, 1, k_upper(m), seed, **em_kwargs)
    clusters = [sorted(c) for c in soft_assign_all(model, points, ASSIGN_THRESHOLD)]
    return LocalClustering(list(members), reducer, model, points, clusters)


def _union(locals_: list[LocalClustering]) -> tuple[list[list[int]], list[tuple[int, int]]]:
    clusters, origins = [], []
    for g, loc in enumerate(locals_):
        for j, positions in enumerate(loc.clusters):
            if positions:
                clusters.append([loc.members[p] for p in positions])
                origins.append((g, j))
    return clusters, origins


def cluster_two_step(embeddings: np.ndarray, seed: Seed = 0, **em_kwargs: Any) -> ClusteringResult:
    X = np.asarray(embeddings, dtype=float)
    n = len(X)
    if n < 2:
        raise ValueError("clustering needs at least 2 points")
    reducer = fit_reducer(X, int(round(math.sqrt(n))), TARGET_DIM)
    global_model = fit_best_k(reducer.train_low, 1, k_upper(n), extend_seed(seed, 0), **em_kwargs)
    global_members = [
        sorted(m) for m in soft_assign_all(global_model, reducer.train_low, ASSIGN_THRESHOLD)
    ]
    locals_ = [
        fit_local(X, members, extend_seed(seed, 1, g), **em_kwargs)
        for g, members in enumerate(global_members)
    ]
    clusters, origins = _union(locals_)
    return ClusteringResult(clusters, origins, locals_, global_model, reducer, global_members)


def cluster_one_step(embeddings: np.ndarray, seed: Seed = 0, **em_kwargs: Any) -> ClusteringResult:
    X = np.asarray(embeddings, dtype=float)
    if len(X) < 2:
        raise ValueError("clustering needs at least 2 points")
    local = fit_local(X, list(range(len(X))), extend_seed(seed, 1, 0), **em_kwargs)
    clusters, origins = _union([local])
    return ClusteringResult(clusters, origins, [local])
