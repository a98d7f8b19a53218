"""Recursive-abstractive tree: layered construction and collapsed-tree retrieval."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Literal, Sequence

import numpy as np

from raptree.clustering import ClusteringResult, cluster_one_step, cluster_two_step
from raptree.embedding import Embedder, cosine_similarities
from raptree.gmm import GmmModel, extend_seed
from raptree.reduction import ReducerModel
from raptree.summarization import Summarizer, SummaryRequest
from raptree.text import DEFAULT_COUNTER, Chunk, TokenCounter

ClusteringMode = Literal["two_step", "one_step"]
SummaryMode = Literal["generic", "query_focused"]

MAX_LAYERS = 5
MAX_TOP_NODES = 10
SUMMARY_MAX_TOKENS = 1000


class TreeInvariantError(AssertionError):
    pass


@dataclass
class TreeNode:
    id: str
    layer: int
    kind: Literal["leaf", "summary"]
    text: str
    token_count: int
    embedding: np.ndarray | None
    children: set[str] = field(default_factory=set)
    parents: set[str] = field(default_factory=set)
    doc_id: str | None = None
    position: int | None = None

    def order_key(self) -> tuple[int, str, int, str]:
        return (self.layer, self.doc_id or "", self.position if self.position is not None else -1, self.id)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "layer": self.layer,
            "kind": self.kind,
            "text": self.text,
            "token_count": self.token_count,
            "embedding": None if self.embedding is None else self.embedding.tolist(),
            "children": sorted(self.children),
            "parents": sorted(self.parents),
            "doc_id": self.doc_id,
            "position": self.position,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TreeNode":
        emb = d.get("embedding")
        return cls(
            id=d["id"],
            layer=int(d["layer"]),
            kind=d["kind"],
            text=d["text"],
            token_count=int(d["token_count"]),
            embedding=None if emb is None else np.asarray(emb, dtype=float),
            children=set(d.get("children", [])),
            parents=set(d.get("parents", [])),
            doc_id=d.get("doc_id"),
            position=d.get("position"),
        )


@dataclass
class LocalState:
    """One local clustering, kept so later insertions and removals can update it.

    ``members[i]`` is the node id behind local point ``i``; ``memberships[j]``
    lists local point indices of component ``j`` and ``cluster_nodes[j]`` the
    summary node built for it (``None`` while a component has no members).
    Groups too small for a fit have no reducer or model and form one cluster.
    """

    members: list[str]
    reducer: ReducerModel | None
    model: GmmModel | None
    points: np.ndarray
    memberships: list[set[int]]
    cluster_nodes: list[str | None]

    def to_dict(self) -> dict[str, Any]:
        return {
            "members": list(self.members),
            "reducer": None if self.reducer is None else self.reducer.to_dict(),
            "model": None if self.model is None else self.model.to_dict(),
            "points": self.points.tolist(),
            "points_shape": list(self.points.shape),
            "memberships": [sorted(m) for m in self.memberships],
            "cluster_nodes": list(self.cluster_nodes),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "LocalState":
        points = np.asarray(d["points"], dtype=float).reshape(d["points_shape"])
        return cls(
            members=list(d["members"]),
            reducer=None if d["reducer"] is None else ReducerModel.from_dict(d["reducer"]),
            model=None if d["model"] is None else GmmModel.from_dict(d["model"]),
            points=points,
            memberships=[set(m) for m in d["memberships"]],
            cluster_nodes=list(d["cluster_nodes"]),
        )


@dataclass
class LayerModel:
    """Models fitted on layer ``i`` whose clusters became the nodes of layer ``i + 1``."""

    global_reducer: ReducerModel | None
    global_model: GmmModel | None
    global_members: list[list[str]]
    locals: list[LocalState]

    def to_dict(self) -> dict[str, Any]:
        return {
            "global_reducer": None if self.global_reducer is None else self.global_reducer.to_dict(),
            "global_model": None if self.global_model is None else self.global_model.to_dict(),
            "global_members": [list(m) for m in self.global_members],
            "locals": [loc.to_dict() for loc in self.locals],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "LayerModel":
        return cls(
            global_reducer=None if d["global_reducer"] is None else ReducerModel.from_dict(d["global_reducer"]),
            global_model=None if d["global_model"] is None else GmmModel.from_dict(d["global_model"]),
            global_members=[list(m) for m in d["global_members"]],
            locals=[LocalState.from_dict(x) for x in d["locals"]],
        )


@dataclass
class TreeConfig:
    clustering_mode: ClusteringMode = "two_step"
    summary_mode: SummaryMode = "generic"
    query: str | None = None
    seed: int = 0
    summary_max_tokens: int = SUMMARY_MAX_TOKENS
    max_layers: int = MAX_LAYERS
    max_top_nodes: int = MAX_TOP_NODES

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TreeConfig":
        return cls(**d)


@dataclass
class RaTree:
    layers: list[list[str]]
    nodes: dict[str, TreeNode]
    layer_models: list[LayerModel]
    config: TreeConfig
    next_seq: int = 0

    @property
    def height(self) -> int:
        return len(self.layers)

    @property
    def top(self) -> list[str]:
        return self.layers[-1]

    def is_empty(self) -> bool:
        return not self.nodes

    def leaves(self) -> list[str]:
        return list(self.layers[0]) if self.layers else []

    def new_summary_id(self) -> str:
        nid = f"s{self.next_seq:06d}"
        self.next_seq += 1
        return nid

    def to_dict(self) -> dict[str, Any]:
        return {
            "layers": [list(layer) for layer in self.layers],
            "nodes": [self.nodes[nid].to_dict() for layer in self.layers for nid in layer],
            "layer_models": [lm.to_dict() for lm in self.layer_models],
            "config": self.config.to_dict(),
            "next_seq": self.next_seq,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RaTree":
        nodes = {n["id"]: TreeNode.from_dict(n) for n in d["nodes"]}
        return cls(
            layers=[list(layer) for layer in d["layers"]],
            nodes=nodes,
            layer_models=[LayerModel.from_dict(x) for x in d["layer_models"]],
            config=TreeConfig.from_dict(d["config"]),
            next_seq=int(d["next_seq"]),
        )

    def validate(self, counter: TokenCounter = DEFAULT_COUNTER) -> None:
        """Raise TreeInvariantError on the first broken structural invariant."""

        def fail(msg: str) -> None:
            raise TreeInvariantError(msg)

        if not 1 <= len(self.layers) <= self.config.max_layers:
            fail(f"layer count {len(self.layers)} out of range")
        listed = [nid for layer in self.layers for nid in layer]
        if len(listed) != len(set(listed)) or set(listed) != set(self.nodes):
            fail("layer lists and node table disagree")
        if len(self.layer_models) > max(0, len(self.layers) - 1):
            fail("more layer models than clustered layers")
        for i, layer in enumerate(self.layers):
            if i > 0 and not layer:
                fail(f"empty layer {i}")
            for nid in layer:
                node = self.nodes[nid]
                if node.layer != i:
                    fail(f"{nid} listed in layer {i} but records layer {node.layer}")
                if (node.kind == "leaf") != (i == 0):
                    fail(f"{nid} kind {node.kind} on layer {i}")
                if node.kind == "leaf" and node.children:
                    fail(f"leaf {nid} has children")
                if node.kind == "summary":
                    if not node.children:
                        fail(f"summary {nid} has no children")
                    if node.token_count > self.config.summary_max_tokens:
                        fail(f"summary {nid} over budget")
                if node.token_count != counter.count(node.text):
                    fail(f"{nid} token_count is stale")
                if node.embedding is None:
                    fail(f"{nid} has no embedding")
                for c in node.children:
                    if c not in self.nodes or nid not in self.nodes[c].parents:
                        fail(f"child link {nid}->{c} not mirrored")
                    if self.nodes[c].layer != i - 1:
                        fail(f"child {c} of {nid} is not one layer below")
                for p in node.parents:
                    if p not in self.nodes or nid not in self.nodes[p].children:
                        fail(f"parent link {nid}->{p} not mirrored")
                if i < len(self.layers) - 1 and not node.parents:
                    fail(f"{nid} on non-top layer {i} has no parent")
                if i == len(self.layers) - 1 and node.parents:
                    fail(f"top node {nid} has parents")


def summary_context(tree: RaTree, member_ids: Sequence[str]) -> str:
    members = sorted((tree.nodes[m] for m in member_ids), key=TreeNode.order_key)
    return "\n\n".join(m.text for m in members)


def summarize_nodes(
    tree: RaTree,
    groups: Sequence[Sequence[str]],
    summarizer: Summarizer,
    counter: TokenCounter = DEFAULT_COUNTER,
    parallelism: int = 1,
) -> list[str]:
    """One summarizer call per group of member ids; results come back in group order."""
    cfg = tree.config
    question = cfg.query if cfg.summary_mode == "query_focused" else None
    requests = [
        SummaryRequest(summary_context(tree, g), question, cfg.summary_max_tokens) for g in groups
    ]

    def run(req: SummaryRequest) -> str:
        return counter.truncate(summarizer.summarize(req), req.max_tokens)

    if parallelism > 1 and len(requests) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            return list(pool.map(run, requests))
    return [run(r) for r in requests]


def _cluster(tree: RaTree, X: np.ndarray, layer: int) -> ClusteringResult:
    seed = extend_seed(tree.config.seed, layer)
    if tree.config.clustering_mode == "one_step":
        return cluster_one_step(X, seed)
    return cluster_two_step(X, seed)


def _layer_model(result: ClusteringResult, ids: list[str], node_of: dict[tuple[int, int], str]) -> LayerModel:
    locals_ = []
    for g, loc in enumerate(result.locals):
        locals_.append(
            LocalState(
                members=[ids[i] for i in loc.members],
                reducer=loc.reducer,
                model=loc.model,
                points=np.asarray(loc.points, dtype=float),
                memberships=[set(c) for c in loc.clusters],
                cluster_nodes=[node_of.get((g, j)) for j in range(len(loc.clusters))],
            )
        )
    global_members = [[ids[i] for i in m] for m in result.global_members]
    return LayerModel(result.global_reducer, result.global_model, global_members, locals_)


def grow_layer(
    tree: RaTree,
    embedder: Embedder,
    summarizer: Summarizer,
    counter: TokenCounter = DEFAULT_COUNTER,
    parallelism: int = 1,
) -> list[str]:
    """Cluster the current top layer and add one summary node per cluster above it."""
    layer = len(tree.layers) - 1
    ids = list(tree.layers[layer])
    X = np.vstack([tree.nodes[i].embedding for i in ids])
    result = _cluster(tree, X, layer)
    groups = [[ids[i] for i in c] for c in result.clusters]
    texts = summarize_nodes(tree, groups, summarizer, counter, parallelism)
    vectors = embedder.embed(texts)
    new_ids: list[str] = []
    node_of: dict[tuple[int, int], str] = {}
    for origin, group, text, vec in zip(result.origins, groups, texts, vectors):
        nid = tree.new_summary_id()
        tree.nodes[nid] = TreeNode(
            nid, layer + 1, "summary", text, counter.count(text), np.asarray(vec, dtype=float), set(group)
        )
        for c in group:
            tree.nodes[c].parents.add(nid)
        node_of[origin] = nid
        new_ids.append(nid)
    tree.layer_models.append(_layer_model(result, ids, node_of))
    tree.layers.append(new_ids)
    return new_ids


def should_grow(tree: RaTree) -> bool:
    cfg = tree.config
    return len(tree.top) > cfg.max_top_nodes and len(tree.layers) < cfg.max_layers


def leaf_nodes(chunks: Sequence[Chunk], embedder: Embedder) -> list[TreeNode]:
    vectors = embedder.embed([c.text for c in chunks]) if chunks else []
    return [
        TreeNode(c.id, 0, "leaf", c.text, c.token_count, np.asarray(v, dtype=float), doc_id=c.doc_id, position=c.position)
        for c, v in zip(chunks, vectors)
    ]


def build_tree(
    chunks: Sequence[Chunk],
    embedder: Embedder,
    summarizer: Summarizer,
    clustering_mode: ClusteringMode = "two_step",
    summary_mode: SummaryMode = "generic",
    query: str | None = None,
    seed: int = 0,
    counter: TokenCounter = DEFAULT_COUNTER,
    parallelism: int = 1,
) -> RaTree:
    if not chunks:
        raise ValueError("build_tree needs at least one chunk")
    if (summary_mode == "query_focused") != (query is not None):
        raise ValueError("a query is required exactly when summary_mode is query_focused")
    ids = [c.id for c in chunks]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate chunk ids")
    cfg = TreeConfig(clustering_mode, summary_mode, query, seed)
    leaves = leaf_nodes(chunks, embedder)
    tree = RaTree([[n.id for n in leaves]], {n.id: n for n in leaves}, [], cfg)
    while should_grow(tree):
        grow_layer(tree, embedder, summarizer, counter, parallelism)
    return tree


@dataclass(frozen=True)
class Retrieved:
    node_id: str
    text: str
    similarity: float
    token_count: int
    layer: int


def collapsed_query(
    tree: RaTree,
    query_embedding: np.ndarray,
    k: int,
    token_threshold: int | None = None,
    leaves_only: bool = False,
) -> list[Retrieved]:
    """Rank every node by cosine similarity and take the best ``k`` within the token budget.

    The walk stops at the first node that would push the running token total past
    ``token_threshold``; ``None`` means no budget.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if token_threshold is not None and token_threshold < 1:
        raise ValueError("token_threshold must be >= 1")
    ids = tree.leaves() if leaves_only else [nid for layer in tree.layers for nid in layer]
    if not ids:
        raise ValueError("cannot query an empty tree")
    sims = cosine_similarities(np.vstack([tree.nodes[i].embedding for i in ids]), query_embedding)
    order = sorted(range(len(ids)), key=lambda j: (-sims[j], ids[j]))
    out: list[Retrieved] = []
    used = 0
    limit = math.inf if token_threshold is None else token_threshold
    for j in order[: min(k, len(order))]:
        node = tree.nodes[ids[j]]
        if used + node.token_count > limit:
            break
        used += node.token_count
        out.append(Retrieved(node.id, node.text, float(sims[j]), node.token_count, node.layer))
    return out
