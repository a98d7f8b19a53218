"""HTTP service endpoints and error mapping."""

from __future__ import annotations

import pytest
from fastapi.testclient import TestClient

from raptree import engine
from raptree.persistence import CorruptIndexError, LockedError, VersionError
from raptree.service import create_app, status_for
from raptree.synthetic import synthetic_corpus, write_corpus


@pytest.fixture()
def client():
    app = create_app(engine.Settings(mock_llm=True))
    with TestClient(app, raise_server_exceptions=False) as c:
        yield c


@pytest.fixture()
def built(client, tmp_path):
    corpus = write_corpus(synthetic_corpus(6, 30, seed=4), tmp_path / "corpus")
    idx = tmp_path / "idx"
    resp = client.post("/build", json={"corpus_dir": str(corpus), "index_dir": str(idx)})
    assert resp.status_code == 200, resp.text
    return idx, resp.json()


class TestEndpoints:
    def test_health(self, client):
        assert client.get("/health").json() == {"status": "ok"}

    def test_build_and_stats(self, client, built):
        idx, body = built
        assert body["documents"] == 6
        stats = client.get("/stats", params={"index_dir": str(idx)}).json()
        assert stats["leaf_count"] == body["chunks"]
        assert stats["table"] == body["stats"]["table"]

    def test_query_matches_engine(self, client, built):
        idx, _ = built
        resp = client.post("/query", json={"index_dir": str(idx), "query": "harbor", "k": 5, "token_limit": 2000})
        local = engine.query_index(idx, "harbor", engine.Settings(mock_llm=True, k=5))
        assert resp.json() == local.model_dump()

    def test_ask(self, client, built):
        idx, _ = built
        body = client.post("/ask", json={"index_dir": str(idx), "query": "harbor", "k0": 6, "budget": 80}).json()
        assert body["context_tokens"] <= 80 and body["summary_calls"] == body["clusters"] + 1

    def test_add_then_query_sees_new_leaves(self, client, built, tmp_path):
        idx, _ = built
        extra = tmp_path / "extra.txt"
        extra.write_text(synthetic_corpus(7, 30, seed=9)[6][1])
        client.post("/query", json={"index_dir": str(idx), "query": "warm the cache"})
        added = client.post("/add", json={"index_dir": str(idx), "path": str(extra)}).json()
        stats = client.get("/stats", params={"index_dir": str(idx)}).json()
        assert stats["leaf_count"] == built[1]["chunks"] + len(added["new_leaves"])
        removed = client.post("/remove", json={"index_dir": str(idx), "doc_id": "extra.txt"}).json()
        assert set(added["new_leaves"]) <= set(removed["removed_node_ids"])

    def test_bench_split(self, client, tmp_path):
        corpus = write_corpus(synthetic_corpus(6, 30, seed=4), tmp_path / "c")
        body = client.post("/bench-split", json={"corpus_dir": str(corpus), "fraction": 0.7}).json()
        assert body["adrap_total_calls"] == body["initial_build_calls"] + body["adrap_calls"]


class TestErrors:
    def test_missing_index(self, client, tmp_path):
        resp = client.post("/query", json={"index_dir": str(tmp_path / "none"), "query": "x"})
        assert resp.status_code == 422
        assert resp.json()["error"] == "CorruptIndexError"

    def test_validation(self, client, tmp_path):
        assert client.post("/query", json={"index_dir": str(tmp_path), "query": "", "k": 0}).status_code == 422

    def test_unknown_document(self, client, built):
        idx, _ = built
        resp = client.post("/remove", json={"index_dir": str(idx), "doc_id": "ghost.txt"})
        assert resp.status_code == 404
        assert set(resp.json()) == {"error", "detail"}

    def test_empty_corpus(self, client, tmp_path):
        (tmp_path / "empty").mkdir()
        resp = client.post("/build", json={"corpus_dir": str(tmp_path / "empty"), "index_dir": str(tmp_path / "i")})
        assert resp.status_code == 422 and resp.json()["error"] == "EmptyCorpusError"

    @pytest.mark.parametrize(
        "exc, status",
        [(LockedError("x"), 409), (VersionError("x"), 409), (CorruptIndexError("x"), 422), (ValueError("x"), 400), (RuntimeError("x"), 500)],
    )
    def test_status_table(self, exc, status):
        assert status_for(exc) == status
