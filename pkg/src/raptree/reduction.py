"""Low-dimensional projection of embeddings and out-of-sample transforms.

The reference reducer projects onto principal components. Any externally fitted
manifold embedding (a UMAP run, say) can be loaded as an ``imported`` reducer from
its training pairs; new points are placed by inverse-distance interpolation of
their nearest training neighbours either way.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

MAX_TARGET_DIM = 10
ZERO_DISTANCE = 1e-12


@dataclass
class ReducerModel:
    kind: str  # "reference_linear" | "imported"
    n_neighbors: int
    target_dim: int
    train_high: np.ndarray  # (n, D)
    train_low: np.ndarray  # (n, target_dim)
    linear_map: np.ndarray | None = None  # (target_dim, D)
    mean: np.ndarray | None = None  # (D,)
    explained_variance: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.train_high.shape[1]

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "n_neighbors": self.n_neighbors,
            "target_dim": self.target_dim,
            "train_high": self.train_high.tolist(),
            "train_low": self.train_low.tolist(),
            "linear_map": None if self.linear_map is None else self.linear_map.tolist(),
            "mean": None if self.mean is None else self.mean.tolist(),
            "explained_variance": (
                None if self.explained_variance is None else self.explained_variance.tolist()
            ),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ReducerModel":
        def arr(key: str, ndmin: int = 1) -> np.ndarray | None:
            value = data.get(key)
            return None if value is None else np.array(value, dtype=float, ndmin=ndmin)

        target_dim = int(data["target_dim"])
        high = arr("train_high", 2)
        low = arr("train_low", 2)
        if low.size == 0:
            low = low.reshape(len(high), target_dim)
        model = cls(
            kind=data["kind"],
            n_neighbors=int(data["n_neighbors"]),
            target_dim=target_dim,
            train_high=high,
            train_low=low,
            linear_map=arr("linear_map", 2),
            mean=arr("mean"),
            explained_variance=arr("explained_variance"),
        )
        model.validate()
        return model

    def validate(self) -> None:
        n = len(self.train_high)
        if n < 1 or len(self.train_low) != n:
            raise ValueError("reducer needs matching, non-empty training pairs")
        if self.train_low.shape[1] != self.target_dim:
            raise ValueError(
                f"train_low has {self.train_low.shape[1]} columns, target_dim is {self.target_dim}"
            )
        if self.target_dim > min(self.dim, n, MAX_TARGET_DIM):
            raise ValueError(f"target_dim {self.target_dim} exceeds min(D, n, {MAX_TARGET_DIM})")


def effective_neighbors(n_neighbors: int, n_points: int) -> int:
    return max(1, min(max(n_neighbors, 2), n_points - 1))


def _fix_signs(components: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of each component made positive
    idx = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(len(components)), idx])
    signs[signs == 0] = 1.0
    return components * signs[:, None]


def fit_reducer(points: np.ndarray, n_neighbors: int, target_dim: int = MAX_TARGET_DIM) -> ReducerModel:
    X = np.asarray(points, dtype=float)
    if X.ndim != 2 or len(X) < 2:
        raise ValueError("fit_reducer needs at least 2 points")
    n, D = X.shape
    t = min(target_dim, MAX_TARGET_DIM, D, n - 1)
    mean = X.mean(axis=0)
    centered = X - mean
    # right singular vectors of the centered data = covariance eigenvectors
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    components = _fix_signs(vt[:t])
    low = centered @ components.T
    if not np.any(svals[:t] > 0):
        low = np.zeros((n, t))
    return ReducerModel(
        kind="reference_linear",
        n_neighbors=effective_neighbors(n_neighbors, n),
        target_dim=t,
        train_high=X.copy(),
        train_low=low,
        linear_map=components,
        mean=mean,
        explained_variance=svals[:t] ** 2 / n,
    )


def knn_transform(model: ReducerModel, v: np.ndarray) -> np.ndarray:
    """Place ``v`` in the reduced space by inverse-distance weighting its nearest training points."""
    v = np.asarray(v, dtype=float)
    if v.shape != (model.dim,):
        raise ValueError(f"expected a vector of dimension {model.dim}, got shape {v.shape}")
    dist = np.linalg.norm(model.train_high - v, axis=1)
    nearest = int(np.argmin(dist))
    if dist[nearest] < ZERO_DISTANCE:
        return model.train_low[nearest].copy()
    k = min(model.n_neighbors, len(dist))
    idx = np.argsort(dist, kind="stable")[:k]
    w = 1.0 / dist[idx]
    return (w @ model.train_low[idx]) / w.sum()


def knn_transform_many(model: ReducerModel, vs: np.ndarray) -> np.ndarray:
    vs = np.asarray(vs, dtype=float)
    if len(vs) == 0:
        return np.empty((0, model.target_dim))
    return np.stack([knn_transform(model, v) for v in vs])


def load_imported_reducer(path: str | Path) -> ReducerModel:
    """Read externally computed (high-d, low-d) training pairs from a JSON file."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data.get("kind") != "imported":
        raise ValueError(f"{path}: expected kind 'imported', got {data.get('kind')!r}")
    return ReducerModel.from_dict(data)


def save_imported_reducer(model: ReducerModel, path: str | Path) -> None:
    payload = {
        "kind": "imported",
        "n_neighbors": model.n_neighbors,
        "target_dim": model.target_dim,
        "train_high": model.train_high.tolist(),
        "train_low": model.train_low.tolist(),
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")
