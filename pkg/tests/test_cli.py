"""Command-line verbs, in-process and against the service."""

from __future__ import annotations

import json

import pytest
from fastapi.testclient import TestClient

from raptree import cli, engine
from raptree.service import create_app
from raptree.synthetic import synthetic_corpus, write_corpus


@pytest.fixture()
def corpus(tmp_path):
    return write_corpus(synthetic_corpus(6, 30, seed=4), tmp_path / "corpus")


@pytest.fixture()
def index(corpus, tmp_path, capsys):
    idx = tmp_path / "idx"
    assert cli.main(["build", str(corpus), str(idx), "--mock-llm"]) == 0
    capsys.readouterr()
    return idx


class TestLocal:
    def test_build_output(self, corpus, tmp_path, capsys):
        assert cli.main(["build", str(corpus), str(tmp_path / "idx"), "--mock-llm"]) == 0
        out = capsys.readouterr().out
        assert out.startswith("indexed 6 documents")
        assert "Number of parents per leaf" in out

    def test_query(self, index, capsys):
        assert cli.main(["query", str(index), "harbor", "--mock-llm", "--k", "3"]) == 0
        out = capsys.readouterr().out
        assert out.count("sim=") <= 3 and "total tokens:" in out

    def test_query_json(self, index, capsys):
        assert cli.main(["query", str(index), "harbor", "--mock-llm", "--json"]) == 0
        body = json.loads(capsys.readouterr().out)
        assert body["total_tokens"] == sum(h["token_count"] for h in body["hits"])

    def test_ask_with_answer(self, index, capsys):
        assert cli.main(["ask", str(index), "harbor", "--mock-llm", "--budget", "60", "--answer"]) == 0
        out = capsys.readouterr().out
        assert "summary calls:" in out and "status:" in out

    def test_add_remove_stats(self, index, tmp_path, capsys):
        extra = tmp_path / "extra.txt"
        extra.write_text(synthetic_corpus(7, 30, seed=9)[6][1])
        assert cli.main(["add", str(index), str(extra), "--mock-llm"]) == 0
        assert "resummarized:" in capsys.readouterr().out
        assert cli.main(["remove", str(index), "extra.txt", "--mock-llm", "--recluster-on-delete"]) == 0
        assert "removed nodes:" in capsys.readouterr().out
        assert cli.main(["stats", str(index)]) == 0
        assert capsys.readouterr().out.startswith("Dataset")

    def test_bench_split(self, corpus, capsys):
        assert cli.main(["bench-split", str(corpus), "--mock-llm"]) == 0
        assert "full tree computed twice" in capsys.readouterr().out

    def test_config_file(self, index, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"mock_llm": True, "k": 2}))
        assert cli.main(["query", str(index), "harbor", "--config", str(cfg), "--json"]) == 0
        assert len(json.loads(capsys.readouterr().out)["hits"]) <= 2

    def test_errors_exit_nonzero(self, tmp_path, capsys):
        assert cli.main(["query", str(tmp_path / "none"), "x", "--mock-llm"]) == 1
        assert capsys.readouterr().err.startswith("error:")
        bad = tmp_path / "bad.json"
        bad.write_text("{")
        assert cli.main(["stats", str(tmp_path), "--config", str(bad)]) == 1


class TestRemote:
    @pytest.fixture()
    def http(self):
        with TestClient(create_app(engine.Settings(mock_llm=True)), raise_server_exceptions=False) as c:
            yield c

    def run(self, argv, http):
        args = cli.build_parser().parse_args([*argv, "--server", "http://test"])
        return cli.run_remote(args, cli.settings_from_args(args), client=http)

    def test_query_matches_local(self, index, http):
        remote = self.run(["query", str(index), "harbor", "--mock-llm", "--k", "4"], http)
        local = engine.query_index(index, "harbor", engine.Settings(mock_llm=True, k=4))
        assert remote == local

    def test_stats_and_ask(self, index, http):
        assert self.run(["stats", str(index)], http).leaf_count > 0
        ask = self.run(["ask", str(index), "harbor", "--mock-llm", "--budget", "50"], http)
        assert ask.context_tokens <= 50

    def test_server_error_becomes_cli_error(self, tmp_path, http):
        with pytest.raises(cli.CliError, match="422"):
            self.run(["query", str(tmp_path / "none"), "x", "--mock-llm"], http)

    def test_unreachable_server(self, tmp_path, capsys):
        code = cli.main(["stats", str(tmp_path), "--server", "http://127.0.0.1:9"])
        assert code == 1 and "cannot reach" in capsys.readouterr().err
