"""Sentence splitting, token counting and overlapping chunking of raw documents."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Protocol, Sequence

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")

# sentence-final punctuation, optional closing quotes/brackets, then whitespace
_BOUNDARY_RE = re.compile(r"[.!?]['\")\]]*(?=\s)")
_PARAGRAPH_RE = re.compile(r"\n[ \t]*\n")
_LAST_WORD_RE = re.compile(r"([A-Za-z][A-Za-z.]*)\.$")
_CUT_RE = re.compile(r"[,;:.!?)\]]['\"]*(?=\s)")

ABBREVIATIONS = frozenset(
    {
        "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "etc", "e.g", "i.e",
        "fig", "figs", "no", "inc", "ltd", "co", "al", "approx", "eq", "sec", "vol",
    }
)


class TokenCounter(Protocol):
    """Anything that can count tokens and cut text at token boundaries."""

    def count(self, text: str) -> int: ...

    def truncate(self, text: str, max_tokens: int) -> str:
        """Longest prefix of ``text`` holding at most ``max_tokens`` tokens."""
        ...

    def tail(self, text: str, n_tokens: int) -> str:
        """Shortest suffix of ``text`` holding the last ``n_tokens`` tokens."""
        ...


class RegexTokenCounter:
    """Words are runs of word characters; every punctuation mark is its own token."""

    name = "regex-words-punct"

    def spans(self, text: str) -> list[tuple[int, int]]:
        return [m.span() for m in _TOKEN_RE.finditer(text)]

    def count(self, text: str) -> int:
        return sum(1 for _ in _TOKEN_RE.finditer(text))

    def truncate(self, text: str, max_tokens: int) -> str:
        if max_tokens <= 0:
            return ""
        spans = self.spans(text)
        if len(spans) <= max_tokens:
            return text
        return text[: spans[max_tokens - 1][1]]

    def tail(self, text: str, n_tokens: int) -> str:
        if n_tokens <= 0:
            return ""
        spans = self.spans(text)
        if len(spans) <= n_tokens:
            return text
        return text[spans[-n_tokens][0]:]


DEFAULT_COUNTER = RegexTokenCounter()


def count_tokens(text: str, counter: TokenCounter = DEFAULT_COUNTER) -> int:
    return counter.count(text)


def sentence_spans(text: str) -> list[tuple[int, int]]:
    """(start, end) offsets of each sentence, surrounding whitespace excluded.

    A boundary follows ``.``, ``!`` or ``?`` (plus any closing quotes) when the
    next non-space character is uppercase or a digit and the preceding word is
    not a known abbreviation. Blank lines always end a sentence.
    """
    cuts: set[int] = set()
    for m in _PARAGRAPH_RE.finditer(text):
        cuts.add(m.start())
    for m in _BOUNDARY_RE.finditer(text):
        end = m.end()
        nxt = end
        while nxt < len(text) and text[nxt].isspace():
            nxt += 1
        if nxt >= len(text):
            continue
        if not (text[nxt].isupper() or text[nxt].isdigit()):
            continue
        if text[m.start()] == ".":
            word = _LAST_WORD_RE.search(text[max(0, m.start() - 20): m.start() + 1])
            if word and word.group(1).lower() in ABBREVIATIONS:
                continue
        cuts.add(end)

    spans = []
    start = 0
    for cut in sorted(cuts) + [len(text)]:
        seg = text[start:cut]
        lead = len(seg) - len(seg.lstrip())
        body = seg.strip()
        if body:
            spans.append((start + lead, start + lead + len(body)))
        start = cut
    return spans


def split_sentences(text: str) -> list[str]:
    return [text[a:b] for a, b in sentence_spans(text)]


@dataclass(frozen=True)
class ChunkingConfig:
    max_body_tokens: int = 250
    overlap_tokens: int = 50

    def __post_init__(self) -> None:
        if not 0 <= self.overlap_tokens < self.max_body_tokens:
            raise ValueError(
                f"overlap_tokens must satisfy 0 <= overlap < max_body_tokens, "
                f"got overlap={self.overlap_tokens}, body={self.max_body_tokens}"
            )


@dataclass(frozen=True)
class Chunk:
    """A contiguous span of a document, optionally prefixed by overlap from its predecessor.

    ``overlap_chars`` is the length of the overlap prefix in ``text`` including the
    single separating space; the remainder is the chunk body.
    """

    id: str
    doc_id: str
    position: int
    text: str
    token_count: int
    overlap_chars: int = 0

    @property
    def body(self) -> str:
        return self.text[self.overlap_chars:]

    @property
    def overlap(self) -> str:
        return self.text[: max(0, self.overlap_chars - 1)]


def chunk_id(doc_id: str, position: int, text: str) -> str:
    h = hashlib.sha256(f"{doc_id}\x00{position}\x00{text}".encode("utf-8"))
    return h.hexdigest()[:16]


def _split_long_sentence(sentence: str, budget: int, counter: TokenCounter) -> list[str]:
    # candidate cuts sit right after punctuation marks followed by whitespace
    cuts = [m.end() for m in _CUT_RE.finditer(sentence)] + [len(sentence)]
    segments = []
    start = 0
    for cut in cuts:
        seg = sentence[start:cut].strip()
        if seg:
            segments.append(seg)
        start = cut

    pieces: list[str] = []
    current = ""
    for seg in segments:
        candidate = f"{current} {seg}" if current else seg
        if counter.count(candidate) <= budget:
            current = candidate
            continue
        if current:
            pieces.append(current)
        current = ""
        # no punctuation inside the budget: fall back to a hard token cut
        while counter.count(seg) > budget:
            head = counter.truncate(seg, budget)
            pieces.append(head.strip())
            seg = seg[len(head):].strip()
        current = seg
    if current:
        pieces.append(current)
    return pieces


def sentence_pieces(text: str, cfg: ChunkingConfig, counter: TokenCounter = DEFAULT_COUNTER) -> list[str]:
    """Sentences of ``text`` with over-long ones cut at punctuation into in-budget pieces."""
    pieces: list[str] = []
    for sentence in split_sentences(text):
        if counter.count(sentence) > cfg.max_body_tokens:
            pieces.extend(_split_long_sentence(sentence, cfg.max_body_tokens, counter))
        else:
            pieces.append(sentence)
    return pieces


def _overlap_for(previous: list[str], budget: int, counter: TokenCounter) -> str:
    if budget == 0 or not previous:
        return ""
    taken: list[str] = []
    for piece in reversed(previous):
        candidate = [piece] + taken
        if counter.count(" ".join(candidate)) > budget:
            break
        taken = candidate
    if taken:
        return " ".join(taken)
    return counter.tail(previous[-1], budget).strip()


def chunk_text(
    doc_id: str,
    text: str,
    cfg: ChunkingConfig = ChunkingConfig(),
    counter: TokenCounter = DEFAULT_COUNTER,
) -> list[Chunk]:
    bodies: list[list[str]] = []
    current: list[str] = []
    for piece in sentence_pieces(text, cfg, counter):
        if current and counter.count(" ".join(current + [piece])) > cfg.max_body_tokens:
            bodies.append(current)
            current = []
        current.append(piece)
    if current:
        bodies.append(current)

    chunks = []
    for position, body in enumerate(bodies):
        body_text = " ".join(body)
        overlap = _overlap_for(bodies[position - 1], cfg.overlap_tokens, counter) if position else ""
        full = f"{overlap} {body_text}" if overlap else body_text
        chunks.append(
            Chunk(
                id=chunk_id(doc_id, position, full),
                doc_id=doc_id,
                position=position,
                text=full,
                token_count=counter.count(full),
                overlap_chars=len(overlap) + 1 if overlap else 0,
            )
        )
    return chunks


def iter_corpus(corpus_dir: str | Path) -> Iterator[tuple[str, str]]:
    """Yield (doc_id, text) for every regular file under ``corpus_dir``, sorted by path.

    Hidden files and directories are skipped; the document id is the POSIX path
    relative to the corpus root.
    """
    root = Path(corpus_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus directory not found: {root}")
    for path in sorted(root.rglob("*")):
        rel = path.relative_to(root)
        if any(part.startswith(".") for part in rel.parts) or not path.is_file():
            continue
        yield rel.as_posix(), path.read_text(encoding="utf-8")


def chunk_corpus(
    documents: Sequence[tuple[str, str]],
    cfg: ChunkingConfig = ChunkingConfig(),
    counter: TokenCounter = DEFAULT_COUNTER,
) -> list[Chunk]:
    chunks: list[Chunk] = []
    for doc_id, text in documents:
        chunks.extend(chunk_text(doc_id, text, cfg, counter))
    return chunks
