"""Incremental insertion and deletion on a built tree."""

from __future__ import annotations

import json

import numpy as np
import pytest

from raptree.adrap import (
    MissingModelsError,
    UnknownNodeError,
    UpdateReport,
    add_document,
    group_by_document,
    remove_chunks,
    remove_document,
    simulate_split_ingest,
)
from raptree.gmm import AdaptiveConfig
from raptree.summarization import MockLlm
from raptree.synthetic import synthetic_corpus
from raptree.text import Chunk, chunk_corpus, chunk_id, chunk_text, count_tokens
from raptree.tree import RaTree, build_tree, collapsed_query

INCREMENTAL = AdaptiveConfig(tau_n=1, tau_c=1000)


def make_chunk(doc: str, pos: int, text: str) -> Chunk:
    return Chunk(chunk_id(doc, pos, text), doc, pos, text, count_tokens(text))


def ancestors(tree: RaTree, node_id: str) -> set[str]:
    seen: set[str] = set()
    frontier = [node_id]
    while frontier:
        for p in tree.nodes[frontier.pop()].parents:
            if p not in seen:
                seen.add(p)
                frontier.append(p)
    return seen


@pytest.fixture(scope="module")
def extra_chunks():
    return chunk_corpus(synthetic_corpus(12, 40, seed=7))[-6:]


class TestInsert:
    def test_single_insert_keeps_invariants(self, small_tree, embedder, extra_chunks):
        chunk = extra_chunks[0]
        report = add_document(small_tree, chunk, embedder, MockLlm(), INCREMENTAL)
        small_tree.validate()
        assert chunk.id in small_tree.leaves()
        assert report.new_node_ids[0] == chunk.id
        assert report.model_changed

    def test_resummarized_nodes_form_ancestor_chain(self, small_tree, embedder, extra_chunks):
        for chunk in extra_chunks:
            report = add_document(small_tree, chunk, embedder, MockLlm(), INCREMENTAL)
            assert report.splits == 0
            resummarized = set(report.resummarized_node_ids)
            assert resummarized <= ancestors(small_tree, chunk.id)
            if all(len(ids) == 1 for ids in report.changed_cluster_ids.values()) and not report.new_layers_created:
                layers = sorted(small_tree.nodes[n].layer for n in resummarized)
                assert layers == list(range(1, len(layers) + 1))
                assert len(layers) <= 5

    def test_summary_calls_match_report(self, small_tree, embedder, extra_chunks):
        llm = MockLlm()
        report = add_document(small_tree, extra_chunks[:3], embedder, llm, INCREMENTAL)
        assert llm.calls == report.summary_call_count == len(report.resummarized_node_ids)

    def test_batch_summarizes_each_node_once(self, small_tree, embedder, extra_chunks):
        report = add_document(small_tree, extra_chunks, embedder, MockLlm(), INCREMENTAL)
        assert len(report.resummarized_node_ids) == len(set(report.resummarized_node_ids))
        small_tree.validate()

    def test_inserted_leaf_is_self_retrievable(self, small_tree, embedder, extra_chunks):
        add_document(small_tree, extra_chunks, embedder, MockLlm())
        for chunk in extra_chunks:
            (hit,) = collapsed_query(small_tree, small_tree.nodes[chunk.id].embedding, 1, leaves_only=True)
            assert hit.node_id == chunk.id

    def test_near_duplicates_trigger_split_attempt(self, small_tree, embedder):
        cfg = AdaptiveConfig(tau_n=1, tau_c=11)
        attempts = 0
        for i in range(16):
            chunk = make_chunk("dup", i, f"Copper kettles hum near the quarry gate while item {i} waits.")
            attempts += add_document(small_tree, chunk, embedder, MockLlm(), cfg).split_attempts
            small_tree.validate()
        assert attempts >= 1

    def test_greedy_mode_leaves_models_alone(self, small_tree, embedder, extra_chunks):
        before = [
            [None if loc.model is None else loc.model.means.copy() for loc in lm.locals] for lm in small_tree.layer_models
        ]
        add_document(small_tree, extra_chunks[0], embedder, MockLlm(), mode="greedy")
        small_tree.validate()
        for lm, means in zip(small_tree.layer_models, before):
            for loc, m in zip(lm.locals, means):
                if m is not None:
                    np.testing.assert_array_equal(loc.model.means, m)

    def test_full_em_path_for_small_models(self, small_tree, embedder, extra_chunks):
        report = add_document(small_tree, extra_chunks[0], embedder, MockLlm(), AdaptiveConfig(tau_n=10_000))
        small_tree.validate()
        assert report.model_changed

    def test_duplicate_chunk_rejected(self, small_tree, embedder, small_chunks):
        with pytest.raises(ValueError):
            add_document(small_tree, small_chunks[0], embedder, MockLlm())

    def test_unknown_mode_rejected(self, small_tree, embedder, extra_chunks):
        with pytest.raises(ValueError):
            add_document(small_tree, extra_chunks[0], embedder, MockLlm(), mode="lazy")

    def test_missing_models(self, small_tree, embedder, extra_chunks):
        small_tree.layer_models.clear()
        with pytest.raises(MissingModelsError):
            add_document(small_tree, extra_chunks[0], embedder, MockLlm())

    def test_growth_from_single_layer(self, embedder):
        docs = synthetic_corpus(8, 40, seed=3)
        chunks = chunk_corpus(docs)
        tree = build_tree(chunks[:3], embedder, MockLlm())
        assert tree.height == 1
        report = add_document(tree, chunks[3:], embedder, MockLlm())
        tree.validate()
        assert report.new_layers_created >= 1 and tree.height >= 2


class TestRemove:
    def test_remove_document(self, small_tree, embedder, small_chunks):
        doc = small_chunks[0].doc_id
        ids = {c.id for c in small_chunks if c.doc_id == doc}
        report = remove_document(small_tree, doc, embedder, MockLlm())
        small_tree.validate()
        assert ids <= set(report.removed_node_ids)
        assert not ids & set(small_tree.nodes)

    def test_remove_with_recluster(self, small_tree, embedder, small_chunks):
        remove_document(small_tree, small_chunks[-1].doc_id, embedder, MockLlm(), recluster=True)
        small_tree.validate()

    def test_remove_everything(self, small_tree, embedder, small_chunks):
        remove_chunks(small_tree, [c.id for c in small_chunks], embedder, MockLlm())
        assert small_tree.layers == [[]]
        assert small_tree.nodes == {}

    def test_insert_after_remove(self, small_tree, embedder, small_chunks, extra_chunks):
        remove_document(small_tree, small_chunks[0].doc_id, embedder, MockLlm())
        add_document(small_tree, extra_chunks, embedder, MockLlm())
        small_tree.validate()

    def test_unknown_ids(self, small_tree, embedder):
        with pytest.raises(UnknownNodeError):
            remove_document(small_tree, "missing.txt", embedder, MockLlm())
        with pytest.raises(UnknownNodeError):
            remove_chunks(small_tree, [small_tree.layers[1][0]], embedder, MockLlm())


class TestReport:
    def test_merge_and_dict(self):
        a = UpdateReport(new_node_ids=["x"], changed_cluster_ids={1: ["s1"]}, summary_call_count=1)
        b = UpdateReport(new_node_ids=["y"], changed_cluster_ids={1: ["s2"], 2: ["s3"]}, splits=1, model_changed=True)
        a.merge(b)
        d = a.to_dict()
        assert d["new_node_ids"] == ["x", "y"]
        assert d["changed_cluster_ids"] == {"1": ["s1", "s2"], "2": ["s3"]}
        assert d["splits"] == 1 and d["model_changed"] is True
        json.dumps(d)


class TestSplitIngest:
    def test_group_by_document(self):
        chunks = chunk_corpus([("a", "One. Two."), ("b", "Three.")])
        assert [[c.doc_id for c in g] for g in group_by_document(chunks)] == [["a"], ["b"]]

    def test_counts(self, embedder):
        chunks = chunk_corpus(synthetic_corpus(10, 40, seed=2))
        res = simulate_split_ingest(chunks, embedder, MockLlm, fraction=0.7)
        assert res.n_chunks == len(chunks)
        assert res.n_initial == int(np.ceil(0.7 * len(chunks)))
        assert res.adrap_total_calls == res.initial_build_calls + res.adrap_calls
        assert res.adrap_calls == sum(r.summary_call_count for r in res.reports)
        res.tree_adrap.validate()
        assert len(res.tree_adrap.leaves()) == len(chunks)

    def test_fraction_validated(self, embedder, small_chunks):
        with pytest.raises(ValueError):
            simulate_split_ingest(small_chunks, embedder, MockLlm, fraction=0.0)
