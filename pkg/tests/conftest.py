"""Shared corpora and trees; expensive builds are cached per session."""

from __future__ import annotations

import pytest

from raptree.embedding import MockEmbedder
from raptree.summarization import MockLlm
from raptree.synthetic import synthetic_corpus
from raptree.text import chunk_corpus
from raptree.tree import build_tree


@pytest.fixture(scope="session")
def embedder() -> MockEmbedder:
    return MockEmbedder(64)


@pytest.fixture(scope="session")
def small_docs() -> list[tuple[str, str]]:
    return synthetic_corpus(8, 40, seed=1)


@pytest.fixture(scope="session")
def small_chunks(small_docs):
    return chunk_corpus(small_docs)


@pytest.fixture()
def small_tree(small_chunks, embedder):
    """Fresh tree per test, since adRAP mutates in place."""
    return build_tree(small_chunks, embedder, MockLlm(), seed=0)


@pytest.fixture(scope="session")
def shared_tree(small_chunks, embedder):
    """Read-only tree shared across tests."""
    return build_tree(small_chunks, embedder, MockLlm(), seed=0)


ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def acceptance_log(request) -> dict:
    return request.config.stash.setdefault(ACCEPTANCE, {})


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, title, seconds, detail = results[n]
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {title}  ({seconds:.1f} s)"
        terminalreporter.write_line(line + (f"  {detail}" if detail else ""))
