"""Prompt catalog and rendering."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from raptree.prompts import (
    HELPFUL,
    NO_INFORMATION,
    TEMPLATES,
    PromptError,
    render_prompt,
    templates_as_dict,
    templates_from_dict,
)

FIXTURE = Path(__file__).parent / "fixtures" / "prompt_tables.json"


class TestCatalog:
    def test_matches_fixture_bytes(self):
        expected = json.loads(FIXTURE.read_text(encoding="utf-8"))
        assert templates_as_dict() == dict(sorted(expected.items()))

    def test_six_templates(self):
        assert sorted(TEMPLATES) == ["coherence", "one_shot_qfs", "qa", "qf_summarize", "query_expand", "summarize"]

    def test_system_prompts(self):
        assert {tid for tid, t in TEMPLATES.items() if t.system == HELPFUL} == set(TEMPLATES) - {"qa"}
        assert f'reply with "{NO_INFORMATION}"' in TEMPLATES["qa"].system

    def test_placeholders(self):
        assert TEMPLATES["summarize"].placeholders == {"context", "max_tokens"}
        assert TEMPLATES["coherence"].placeholders == {"question", "answer"}
        assert TEMPLATES["qa"].placeholders == {"context", "question", "max_tokens"}

    def test_dict_round_trip(self):
        assert templates_from_dict(templates_as_dict()) == TEMPLATES


class TestRender:
    def test_summarize(self):
        system, user = render_prompt("summarize", {"context": "CTX", "max_tokens": 100})
        assert system == HELPFUL
        assert user == (
            "Write a summary of the following, including as many key details as possible "
            "using at most 100 tokens:\nCTX"
        )

    def test_single_pass_substitution(self):
        # a bound value that looks like a placeholder is not expanded again
        _, user = render_prompt("qa", {"context": "{question}", "question": "Q?", "max_tokens": 5})
        assert user.startswith("Sources: {question}\nQuestion: Q?")

    def test_unbound_placeholder(self):
        with pytest.raises(PromptError, match="question"):
            render_prompt("qf_summarize", {"context": "c", "max_tokens": 1})

    def test_unknown_template(self):
        with pytest.raises(PromptError):
            render_prompt("nope", {})

    def test_extra_bindings_ignored(self):
        _, user = render_prompt("coherence", {"question": "q", "answer": "a", "context": "unused"})
        assert user.endswith("Question: q\nAnswer: a")
