"""Token counting, sentence splitting and chunking."""

from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from raptree.text import (
    Chunk,
    ChunkingConfig,
    RegexTokenCounter,
    chunk_corpus,
    chunk_id,
    chunk_text,
    count_tokens,
    iter_corpus,
    sentence_pieces,
    split_sentences,
)

COUNTER = RegexTokenCounter()


def sentence(n_tokens: int, word: str = "alpha", lead: str = "Start") -> str:
    """Sentence of exactly ``n_tokens`` tokens: a capitalized lead, fillers, a period."""
    return " ".join([lead] + [word] * (n_tokens - 2)) + "."


def normalized(text: str) -> str:
    return " ".join(text.split())


# ---------------------------------------------------------------------------
# Token counter
# ---------------------------------------------------------------------------


class TestTokenCounter:
    def test_words_and_punctuation_are_tokens(self):
        assert count_tokens("Hello, world!") == 4

    def test_empty_text_has_no_tokens(self):
        assert count_tokens("") == 0
        assert count_tokens("   \n ") == 0

    def test_truncate_keeps_prefix(self):
        assert COUNTER.truncate("one two three four", 2) == "one two"
        assert COUNTER.truncate("one two", 5) == "one two"
        assert COUNTER.truncate("one two", 0) == ""

    def test_tail_keeps_suffix(self):
        assert COUNTER.tail("one two three four.", 2) == "four."
        assert COUNTER.tail("one", 3) == "one"

    @given(st.text(max_size=200), st.integers(min_value=0, max_value=50))
    def test_truncate_never_exceeds_budget(self, text, n):
        cut = COUNTER.truncate(text, n)
        assert text.startswith(cut)
        assert COUNTER.count(cut) == min(n, COUNTER.count(text))


# ---------------------------------------------------------------------------
# Sentence splitting
# ---------------------------------------------------------------------------


class TestSplitSentences:
    def test_basic_split(self):
        assert split_sentences("One here. Two there! Three?") == ["One here.", "Two there!", "Three?"]

    def test_abbreviation_does_not_split(self):
        assert split_sentences("Dr. Smith arrived. He sat.") == ["Dr. Smith arrived.", "He sat."]

    def test_decimal_number_does_not_split(self):
        assert split_sentences("It measured 3.5 m in total. Next one.") == [
            "It measured 3.5 m in total.",
            "Next one.",
        ]

    def test_lowercase_continuation_does_not_split(self):
        assert split_sentences("See the fig. above for details.") == ["See the fig. above for details."]
        assert split_sentences("done. and more") == ["done. and more"]

    def test_closing_quote_stays_with_sentence(self):
        assert split_sentences('He said "Go." Then he left.') == ['He said "Go."', "Then he left."]

    def test_blank_line_ends_sentence(self):
        assert split_sentences("A heading\n\nBody text here.") == ["A heading", "Body text here."]

    def test_whitespace_only(self):
        assert split_sentences("  \n\n ") == []

    @given(st.lists(st.sampled_from(["Alpha beta.", "Gamma?", "delta epsilon", "Dr. Who", "3.5 m!", "\n\n", " "]), max_size=20))
    def test_split_preserves_all_text(self, parts):
        text = " ".join(parts)
        assert normalized(" ".join(split_sentences(text))) == normalized(text)


# ---------------------------------------------------------------------------
# Chunking
# ---------------------------------------------------------------------------


class TestChunkingConfig:
    def test_defaults(self):
        cfg = ChunkingConfig()
        assert (cfg.max_body_tokens, cfg.overlap_tokens) == (250, 50)

    def test_overlap_must_be_below_body(self):
        with pytest.raises(ValueError):
            ChunkingConfig(max_body_tokens=50, overlap_tokens=50)
        with pytest.raises(ValueError):
            ChunkingConfig(overlap_tokens=-1)


class TestChunkTextWorkedExample:
    """Six 100-token sentences, traced by hand against the default budgets."""

    @pytest.fixture()
    def parts(self):
        return [sentence(100, lead=f"S{i}") for i in range(1, 7)]

    @pytest.fixture()
    def chunks(self, parts):
        return chunk_text("doc", " ".join(parts))

    def test_bodies_pack_two_sentences(self, chunks, parts):
        assert [c.body for c in chunks] == [
            f"{parts[0]} {parts[1]}",
            f"{parts[2]} {parts[3]}",
            f"{parts[4]} {parts[5]}",
        ]

    def test_first_chunk_has_no_overlap(self, chunks):
        assert chunks[0].overlap == ""
        assert chunks[0].token_count == 200

    def test_overlap_is_token_tail_of_previous_sentence(self, chunks, parts):
        # no whole sentence fits in 50 tokens, so the last 50 tokens of the prior body are used
        tail = " ".join(["alpha"] * 49) + "."
        assert chunks[1].overlap == tail
        assert chunks[2].overlap == tail
        assert chunks[1].token_count == 250
        assert chunks[1].text == f"{tail} {parts[2]} {parts[3]}"

    def test_positions_and_ids(self, chunks):
        assert [c.position for c in chunks] == [0, 1, 2]
        assert all(c.id == chunk_id("doc", c.position, c.text) for c in chunks)
        assert len({c.id for c in chunks}) == 3

    def test_whole_sentences_preferred_for_overlap(self):
        short = [sentence(20, lead=f"T{i}") for i in range(30)]
        chunks = chunk_text("d", " ".join(short))
        # 12 sentences of 20 tokens fill a 250-token body; the overlap takes the last two
        assert chunks[1].overlap == f"{short[10]} {short[11]}"


class TestLongSentences:
    @pytest.fixture()
    def long_sentence(self):
        clauses = [" ".join(["Clause"] + ["word"] * 38) + "," for _ in range(15)]
        return " ".join(clauses)[:-1] + "."

    def test_long_sentence_is_cut_at_punctuation(self, long_sentence):
        assert COUNTER.count(long_sentence) == 600
        pieces = sentence_pieces(long_sentence, ChunkingConfig())
        assert len(pieces) >= 3
        for piece in pieces[:-1]:
            assert piece.endswith(",")
            assert COUNTER.count(piece) <= 250
        assert normalized(" ".join(pieces)) == normalized(long_sentence)

    def test_long_sentence_chunks_respect_budgets(self, long_sentence):
        chunks = chunk_text("d", long_sentence)
        assert len(chunks) >= 3
        for c in chunks:
            assert c.token_count <= 300
            assert COUNTER.count(c.body) <= 250

    def test_unpunctuated_run_falls_back_to_token_cut(self):
        text = " ".join(["word"] * 700)
        pieces = sentence_pieces(text, ChunkingConfig())
        assert [COUNTER.count(p) for p in pieces] == [250, 250, 200]


class TestChunkTextEdges:
    def test_empty_document(self):
        assert chunk_text("d", "") == []
        assert chunk_text("d", "   \n\n  ") == []

    def test_single_short_sentence(self):
        (c,) = chunk_text("d", "Just one.")
        assert c.text == "Just one." and c.overlap_chars == 0 and c.body == c.text

    def test_zero_overlap(self):
        parts = [sentence(100, lead=f"S{i}") for i in range(4)]
        chunks = chunk_text("d", " ".join(parts), ChunkingConfig(overlap_tokens=0))
        assert all(c.overlap == "" for c in chunks)

    def test_chunk_ids_depend_on_document(self):
        a = chunk_text("a", "Same text.")[0]
        b = chunk_text("b", "Same text.")[0]
        assert a.id != b.id


WORDS = st.sampled_from(["river", "stone", "Light", "a", "of", "Mr.", "3.5", "e.g.", "blue", "Zeta"])
PUNCT = st.sampled_from([".", "!", "?", ",", ";", ""])


@st.composite
def documents(draw):
    n = draw(st.integers(min_value=0, max_value=120))
    tokens = []
    for _ in range(n):
        run = draw(st.lists(WORDS, min_size=1, max_size=60))
        tokens.append(" ".join(run) + draw(PUNCT))
        if draw(st.booleans()) and draw(st.booleans()):
            tokens.append("\n\n")
    return " ".join(tokens)


class TestChunkInvariants:
    @settings(max_examples=60, deadline=None)
    @given(documents())
    def test_budgets_and_reassembly(self, text):
        chunks = chunk_text("doc", text)
        for c in chunks:
            assert c.token_count == COUNTER.count(c.text)
            assert c.token_count <= 300
            assert COUNTER.count(c.body) <= 250
            assert COUNTER.count(c.overlap) <= 50
            assert c.text.endswith(c.body)
        assert normalized(" ".join(c.body for c in chunks)) == normalized(text)
        pieces = sentence_pieces(text, ChunkingConfig())
        assert " ".join(c.body for c in chunks) == " ".join(pieces)

    @settings(max_examples=30, deadline=None)
    @given(documents())
    def test_overlap_comes_from_previous_body(self, text):
        chunks = chunk_text("doc", text)
        for prev, cur in zip(chunks, chunks[1:]):
            if cur.overlap:
                assert prev.body.endswith(cur.overlap)


class TestCorpus:
    def test_iter_corpus_sorted_and_skips_hidden(self, tmp_path):
        (tmp_path / "b.txt").write_text("Bee.", encoding="utf-8")
        (tmp_path / "sub").mkdir()
        (tmp_path / "sub" / "a.txt").write_text("Ay.", encoding="utf-8")
        (tmp_path / ".hidden").write_text("No.", encoding="utf-8")
        assert list(iter_corpus(tmp_path)) == [("b.txt", "Bee."), ("sub/a.txt", "Ay.")]

    def test_chunk_corpus_concatenates_in_order(self):
        chunks = chunk_corpus([("x", "One."), ("y", "Two.")])
        assert [(c.doc_id, c.text) for c in chunks] == [("x", "One."), ("y", "Two.")]
        assert all(isinstance(c, Chunk) for c in chunks)
