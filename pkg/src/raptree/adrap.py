"""Incremental tree maintenance: document insertion and removal without a full rebuild.

Changes are applied one layer at a time from the leaves upward. Every summary
node touched by a batch (one document's chunks, or one removal) is summarized
once after its layer settles, so a node shared by several chunks of the same
document is not regenerated per chunk.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np

from raptree.embedding import Embedder
from raptree.gmm import (
    AdaptiveConfig,
    adaptive_cluster_update,
    decrement,
    extend_seed,
    fit_best_k,
    fit_em,
    match_clusters,
    responsibilities,
    soft_assign_all,
)
from raptree.reduction import fit_reducer, knn_transform
from raptree.clustering import LOCAL_NEIGHBORS, MIN_LOCAL_SIZE, TARGET_DIM
from raptree.summarization import Summarizer
from raptree.text import DEFAULT_COUNTER, Chunk, TokenCounter
from raptree.tree import (
    LocalState,
    RaTree,
    TreeNode,
    build_tree,
    grow_layer,
    leaf_nodes,
    should_grow,
    summarize_nodes,
)

UpdateMode = Literal["adaptive", "greedy"]


class MissingModelsError(RuntimeError):
    pass


class UnknownNodeError(KeyError):
    pass


@dataclass
class UpdateReport:
    new_node_ids: list[str] = field(default_factory=list)
    removed_node_ids: list[str] = field(default_factory=list)
    changed_cluster_ids: dict[int, list[str]] = field(default_factory=dict)
    resummarized_node_ids: list[str] = field(default_factory=list)
    summary_call_count: int = 0
    new_layers_created: int = 0
    split_attempts: int = 0
    splits: int = 0
    model_changed: bool = False

    def merge(self, other: "UpdateReport") -> None:
        self.new_node_ids += other.new_node_ids
        self.removed_node_ids += other.removed_node_ids
        for layer, ids in other.changed_cluster_ids.items():
            self.changed_cluster_ids.setdefault(layer, []).extend(ids)
        self.resummarized_node_ids += other.resummarized_node_ids
        self.summary_call_count += other.summary_call_count
        self.new_layers_created += other.new_layers_created
        self.split_attempts += other.split_attempts
        self.splits += other.splits
        self.model_changed = self.model_changed or other.model_changed

    def to_dict(self) -> dict[str, object]:
        return {
            "new_node_ids": list(self.new_node_ids),
            "removed_node_ids": list(self.removed_node_ids),
            "changed_cluster_ids": {str(k): v for k, v in sorted(self.changed_cluster_ids.items())},
            "resummarized_node_ids": list(self.resummarized_node_ids),
            "summary_call_count": self.summary_call_count,
            "new_layers_created": self.new_layers_created,
            "split_attempts": self.split_attempts,
            "splits": self.splits,
            "model_changed": self.model_changed,
        }


class _Batch:
    """Pending work per layer while one update propagates upward."""

    def __init__(self, tree: RaTree, report: UpdateReport):
        self.tree = tree
        self.report = report
        self.inserts: dict[int, list[str]] = {}
        self.removals: dict[int, set[str]] = {}
        self.dirty: dict[int, set[str]] = {}
        self.created: dict[int, list[str]] = {}

    def mark_dirty(self, node_id: str) -> None:
        layer = self.tree.nodes[node_id].layer
        self.dirty.setdefault(layer, set()).add(node_id)
        changed = self.report.changed_cluster_ids.setdefault(layer, [])
        if node_id not in changed:
            changed.append(node_id)

    def schedule_removal(self, node_id: str) -> None:
        node = self.tree.nodes[node_id]
        for c in node.children:
            self.tree.nodes[c].parents.discard(node_id)
        node.children = set()
        self.removals.setdefault(node.layer, set()).add(node_id)

    def create_summary(self, layer: int, children: set[str]) -> str:
        nid = self.tree.new_summary_id()
        self.tree.nodes[nid] = TreeNode(nid, layer, "summary", "", 0, None, set(children))
        for c in children:
            self.tree.nodes[c].parents.add(nid)
        self.tree.layers[layer].append(nid)
        self.created.setdefault(layer, []).append(nid)
        self.report.new_node_ids.append(nid)
        return nid


def _relink(batch: _Batch, node_id: str, children: set[str]) -> bool:
    node = batch.tree.nodes[node_id]
    if node.children == children:
        return False
    for c in node.children - children:
        batch.tree.nodes[c].parents.discard(node_id)
    for c in children - node.children:
        batch.tree.nodes[c].parents.add(node_id)
    node.children = set(children)
    return True


def _sync_clusters(
    batch: _Batch,
    layer: int,
    loc: LocalState,
    labels: Sequence[int | None],
) -> None:
    """Bring summary nodes on ``layer + 1`` in line with ``loc.memberships``.

    ``labels[j]`` is the old component position that new component ``j``
    continues (its node is reused), or ``None`` for a component without a node.
    Nodes of old components that no longer exist are removed.
    """
    old_nodes = loc.cluster_nodes
    survived = {lab for lab in labels if lab is not None}
    for pos, nid in enumerate(old_nodes):
        if nid is not None and pos not in survived and nid in batch.tree.nodes:
            batch.schedule_removal(nid)
    new_nodes: list[str | None] = []
    for j, lab in enumerate(labels):
        children = {loc.members[p] for p in loc.memberships[j]}
        nid = old_nodes[lab] if lab is not None else None
        if nid is None:
            new_nodes.append(batch.create_summary(layer + 1, children) if children else None)
        elif not children:
            batch.schedule_removal(nid)
            new_nodes.append(None)
        else:
            if _relink(batch, nid, children):
                batch.mark_dirty(nid)
            new_nodes.append(nid)
    loc.cluster_nodes = new_nodes


def _seed(tree: RaTree, *extra: int) -> list[int]:
    return extend_seed(tree.config.seed, 2, tree.next_seq, *extra)


def _init_small_local(tree: RaTree, loc: LocalState, layer: int) -> None:
    X = np.vstack([tree.nodes[m].embedding for m in loc.members])
    loc.reducer = fit_reducer(X, LOCAL_NEIGHBORS, TARGET_DIM)
    loc.points = loc.reducer.train_low.copy()
    loc.model = fit_em(loc.points, 1, seed=_seed(tree, layer))


def _insert(batch: _Batch, layer: int, node_id: str, cfg: AdaptiveConfig, mode: UpdateMode) -> None:
    tree = batch.tree
    lm = tree.layer_models[layer]
    v = tree.nodes[node_id].embedding
    if lm.global_model is not None:
        vg = knn_transform(lm.global_reducer, v)
        g = int(np.argmax(responsibilities(lm.global_model, vg)))
    else:
        g = 0
    while len(lm.global_members) <= g:
        lm.global_members.append([])
    lm.global_members[g].append(node_id)
    while len(lm.locals) <= g:
        lm.locals.append(LocalState([], None, None, np.empty((0, 0)), [], []))
    loc = lm.locals[g]

    if loc.model is None:
        loc.members.append(node_id)
        loc.memberships = [set(range(len(loc.members)))]
        if len(loc.cluster_nodes) != 1:
            loc.cluster_nodes = [loc.cluster_nodes[0] if loc.cluster_nodes else None]
        if mode == "adaptive" and len(loc.members) >= MIN_LOCAL_SIZE:
            _init_small_local(tree, loc, layer)
            batch.report.model_changed = True
        _sync_clusters(batch, layer, loc, [0])
        return

    vl = knn_transform(loc.reducer, v)
    new_index = len(loc.members)
    points = loc.points.reshape(-1, loc.model.d)
    if mode == "greedy":
        a = int(np.argmax(responsibilities(loc.model, vl)))
        loc.members.append(node_id)
        loc.points = np.vstack([points, vl[None, :]])
        loc.memberships[a].add(new_index)
        _sync_clusters(batch, layer, loc, list(range(len(loc.memberships))))
        return

    outcome = adaptive_cluster_update(
        loc.model, points, loc.memberships, vl, cfg, seed=_seed(tree, layer, g)
    )
    loc.members.append(node_id)
    loc.points = np.vstack([points, vl[None, :]])
    loc.model = outcome.model
    loc.memberships = outcome.memberships
    batch.report.model_changed = True
    batch.report.split_attempts += len(outcome.split_attempts)
    batch.report.splits += len(outcome.splits)
    _sync_clusters(batch, layer, loc, outcome.labels)


def _drop_point(loc: LocalState, idx: int) -> None:
    del loc.members[idx]
    if loc.points.size:
        loc.points = np.delete(loc.points, idx, axis=0)
    loc.memberships = [{p - (p > idx) for p in m if p != idx} for m in loc.memberships]


def _detach(batch: _Batch, layer: int, node_id: str, recluster: bool) -> None:
    """Remove a node from every local clustering of ``layer`` that holds it."""
    tree = batch.tree
    if layer >= len(tree.layer_models):
        return
    lm = tree.layer_models[layer]
    for g, members in enumerate(lm.global_members):
        if node_id in members:
            members.remove(node_id)
    for g, loc in enumerate(lm.locals):
        if node_id not in loc.members:
            continue
        idx = loc.members.index(node_id)
        if loc.model is None or len(loc.members) == 1:
            _drop_point(loc, idx)
            if not loc.members:
                loc.reducer, loc.model, loc.points = None, None, np.empty((0, 0))
                loc.memberships = []
                labels: list[int | None] = []
            else:
                labels = list(range(len(loc.memberships)))
            _sync_clusters(batch, layer, loc, labels)
            continue

        x = loc.points[idx]
        model, dropped = decrement(loc.model, x)
        batch.report.model_changed = True
        kept = [k for k in range(loc.model.K) if k not in set(dropped)]
        _drop_point(loc, idx)
        loc.model = model
        old_members = loc.memberships
        memberships = [old_members[k] for k in kept]
        # points left only in dropped components move to their most probable survivor
        covered = set().union(*memberships) if memberships else set()
        for p in range(len(loc.members)):
            if p not in covered:
                a = int(np.argmax(responsibilities(model, loc.points[p])))
                memberships[a].add(p)
        loc.memberships = memberships
        labels = list(kept)

        if recluster and len(loc.members) >= 2:
            K = model.K
            best = fit_best_k(loc.points, max(1, K - 2), K, seed=_seed(tree, layer, g))
            new_members = soft_assign_all(best, loc.points, 0.1)
            rel = match_clusters(new_members, loc.memberships)
            labels = [labels[r] if r is not None else None for r in rel]
            loc.model = best
            loc.memberships = new_members
        _sync_clusters(batch, layer, loc, labels)


def _delete_node(batch: _Batch, node_id: str, recluster: bool) -> None:
    tree = batch.tree
    node = tree.nodes[node_id]
    for p in list(node.parents):
        parent = tree.nodes[p]
        parent.children.discard(node_id)
        batch.mark_dirty(p)
    node.parents = set()
    _detach(batch, node.layer, node_id, recluster)
    for c in node.children:
        tree.nodes[c].parents.discard(node_id)
    tree.layers[node.layer].remove(node_id)
    del tree.nodes[node_id]
    batch.report.removed_node_ids.append(node_id)
    if node_id in batch.created.get(node.layer, []):
        batch.created[node.layer].remove(node_id)


def _resummarize(
    batch: _Batch,
    layer: int,
    ids: list[str],
    embedder: Embedder,
    summarizer: Summarizer,
    counter: TokenCounter,
) -> None:
    tree = batch.tree
    if not ids:
        return
    texts = summarize_nodes(tree, [sorted(tree.nodes[i].children) for i in ids], summarizer, counter)
    vectors = embedder.embed(texts)
    for nid, text, vec in zip(ids, texts, vectors):
        node = tree.nodes[nid]
        node.text = text
        node.token_count = counter.count(text)
        node.embedding = np.asarray(vec, dtype=float)
        batch.report.resummarized_node_ids.append(nid)
        batch.report.summary_call_count += 1
        for p in node.parents:
            batch.mark_dirty(p)


def _propagate(
    batch: _Batch,
    embedder: Embedder,
    summarizer: Summarizer,
    cfg: AdaptiveConfig,
    mode: UpdateMode,
    recluster: bool,
    counter: TokenCounter,
) -> None:
    tree = batch.tree
    layer = 0
    while layer < len(tree.layers):
        # childless summaries disappear before anything is regenerated
        for nid in sorted(batch.dirty.get(layer, set())):
            if nid in tree.nodes and not tree.nodes[nid].children and tree.nodes[nid].kind == "summary":
                batch.removals.setdefault(layer, set()).add(nid)
        for nid in sorted(batch.removals.get(layer, set())):
            if nid in tree.nodes:
                _delete_node(batch, nid, recluster)
        if layer > 0:
            created = [n for n in batch.created.get(layer, []) if n in tree.nodes]
            stale = sorted(n for n in batch.dirty.get(layer, set()) if n in tree.nodes and n not in created)
            _resummarize(batch, layer, created + stale, embedder, summarizer, counter)
            batch.inserts.setdefault(layer, []).extend(created)
        if layer < len(tree.layer_models):
            for nid in batch.inserts.get(layer, []):
                if nid in tree.nodes:
                    _insert(batch, layer, nid, cfg, mode)
        layer += 1

    while len(tree.layers) > 1 and not tree.layers[-1]:
        tree.layers.pop()
    del tree.layer_models[max(0, len(tree.layers) - 1):]
    for nid in tree.layers[-1]:
        tree.nodes[nid].parents = set()
    if tree.layers[0]:
        while should_grow(tree):
            new_ids = grow_layer(tree, embedder, summarizer, counter)
            batch.report.new_layers_created += 1
            batch.report.new_node_ids += new_ids
            batch.report.resummarized_node_ids += new_ids
            batch.report.summary_call_count += len(new_ids)
            batch.report.model_changed = True


def add_document(
    tree: RaTree,
    chunks: Chunk | Sequence[Chunk],
    embedder: Embedder,
    summarizer: Summarizer,
    cfg: AdaptiveConfig | None = None,
    mode: UpdateMode = "adaptive",
    counter: TokenCounter = DEFAULT_COUNTER,
) -> UpdateReport:
    """Insert a chunk or a batch of chunks into ``tree`` in place.

    Chunks enter the clustering one at a time; summaries of every touched node
    are regenerated once the whole batch has been placed.
    """
    if isinstance(chunks, Chunk):
        chunks = [chunks]
    if mode not in ("adaptive", "greedy"):
        raise ValueError(f"unknown update mode {mode!r}")
    if len(tree.layers) > 1 and len(tree.layer_models) < len(tree.layers) - 1:
        raise MissingModelsError("tree has no retained clustering models; rebuild it")
    for c in chunks:
        if c.id in tree.nodes:
            raise ValueError(f"chunk {c.id} is already indexed")
    cfg = cfg or AdaptiveConfig.for_initial_size(len(tree.leaves()))
    report = UpdateReport()
    batch = _Batch(tree, report)
    leaves = leaf_nodes(list(chunks), embedder)
    for leaf in leaves:
        tree.nodes[leaf.id] = leaf
        tree.layers[0].append(leaf.id)
        report.new_node_ids.append(leaf.id)
    batch.inserts[0] = [leaf.id for leaf in leaves]
    _propagate(batch, embedder, summarizer, cfg, mode, False, counter)
    return report


def remove_chunks(
    tree: RaTree,
    chunk_ids: Sequence[str],
    embedder: Embedder,
    summarizer: Summarizer,
    recluster: bool = False,
    counter: TokenCounter = DEFAULT_COUNTER,
) -> UpdateReport:
    for cid in chunk_ids:
        node = tree.nodes.get(cid)
        if node is None or node.kind != "leaf":
            raise UnknownNodeError(cid)
    report = UpdateReport()
    batch = _Batch(tree, report)
    batch.removals[0] = set(chunk_ids)
    _propagate(batch, embedder, summarizer, AdaptiveConfig(), "adaptive", recluster, counter)
    return report


def remove_document(
    tree: RaTree,
    doc_id: str,
    embedder: Embedder,
    summarizer: Summarizer,
    recluster: bool = False,
    counter: TokenCounter = DEFAULT_COUNTER,
) -> UpdateReport:
    ids = [nid for nid in tree.leaves() if tree.nodes[nid].doc_id == doc_id]
    if not ids:
        raise UnknownNodeError(doc_id)
    return remove_chunks(tree, ids, embedder, summarizer, recluster, counter)


def group_by_document(chunks: Sequence[Chunk]) -> list[list[Chunk]]:
    groups: list[list[Chunk]] = []
    for c in chunks:
        if groups and groups[-1][0].doc_id == c.doc_id:
            groups[-1].append(c)
        else:
            groups.append([c])
    return groups


@dataclass
class SplitIngestResult:
    tree_adrap: RaTree
    n_chunks: int
    n_initial: int
    initial_build_calls: int
    adrap_calls: int
    full_rebuild_calls: int
    adrap_seconds: float
    rebuild_seconds: float
    reports: list[UpdateReport]

    @property
    def adrap_total_calls(self) -> int:
        return self.initial_build_calls + self.adrap_calls


def simulate_split_ingest(
    chunks: Sequence[Chunk],
    embedder: Embedder,
    summarizer_factory: Callable[[], Summarizer],
    fraction: float = 0.7,
    cfg: AdaptiveConfig | None = None,
    seed: int = 0,
    mode: UpdateMode = "adaptive",
    counter: TokenCounter = DEFAULT_COUNTER,
    per_document: bool = False,
) -> SplitIngestResult:
    """Build on the first ``fraction`` of chunks, insert the rest, and count summarizer
    calls against one full rebuild over every chunk.

    The remainder is inserted point by point but summarized as one batch unless
    ``per_document`` asks for one batch (and one round of summaries) per document.
    """
    if not 0 < fraction <= 1:
        raise ValueError("fraction must be in (0, 1]")
    n = len(chunks)
    n0 = min(n, math.ceil(fraction * n))
    summarizer = summarizer_factory()
    tree = build_tree(chunks[:n0], embedder, summarizer, seed=seed, counter=counter)
    initial = summarizer.calls
    cfg = cfg or AdaptiveConfig.for_initial_size(n0)
    start = time.perf_counter()
    rest = list(chunks[n0:])
    if per_document:
        batches = group_by_document(rest)
    else:
        batches = [rest] if rest else []
    reports = [add_document(tree, b, embedder, summarizer, cfg, mode, counter) for b in batches]
    adrap_seconds = time.perf_counter() - start
    adrap_calls = summarizer.calls - initial

    rebuild = summarizer_factory()
    start = time.perf_counter()
    build_tree(chunks, embedder, rebuild, seed=seed, counter=counter)
    rebuild_seconds = time.perf_counter() - start
    return SplitIngestResult(
        tree, n, n0, initial, adrap_calls, rebuild.calls, adrap_seconds, rebuild_seconds, reports
    )
