"""Summarizers and chat-backed helpers: a deterministic extractive mock and a remote client."""

from __future__ import annotations

import re
import threading
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Protocol

from raptree.prompts import NO_INFORMATION, render_prompt
from raptree.remote import OpenAICompatClient
from raptree.text import DEFAULT_COUNTER, TokenCounter, split_sentences

ChatFn = Callable[[str, str], str]

_WORD_RE = re.compile(r"\w+")
_PARAGRAPH_SPLIT = re.compile(r"\n[ \t]*\n")


@dataclass(frozen=True)
class SummaryRequest:
    context: str
    question: str | None = None
    max_tokens: int = 1000

    def __post_init__(self) -> None:
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


class Summarizer(Protocol):
    calls: int

    def summarize(self, req: SummaryRequest) -> str: ...


class CoherenceParseError(ValueError):
    pass


def content_words(text: str) -> set[str]:
    return {w.lower() for w in _WORD_RE.findall(text) if len(w) >= 4}


def paragraphs(text: str) -> list[str]:
    return [p.strip() for p in _PARAGRAPH_SPLIT.split(text) if p.strip()]


def mock_summarize(req: SummaryRequest, counter: TokenCounter = DEFAULT_COUNTER) -> str:
    """Extractive stand-in for an LLM summary.

    Takes the lead sentence of every paragraph. With a question, leads sharing
    more >=4-character words with it come first (ties keep document order).
    Sentences are appended while the budget holds; if even the first one is too
    long it is cut at a token boundary.
    """
    leads = []
    for para in paragraphs(req.context):
        sentences = split_sentences(para)
        if sentences:
            leads.append(sentences[0])
    if req.question:
        q = content_words(req.question)
        order = sorted(range(len(leads)), key=lambda i: (-len(content_words(leads[i]) & q), i))
        leads = [leads[i] for i in order]

    out: list[str] = []
    for sentence in leads:
        candidate = " ".join(out + [sentence])
        if counter.count(candidate) > req.max_tokens:
            break
        out.append(sentence)
    if not out and leads:
        return counter.truncate(leads[0], req.max_tokens).strip()
    return " ".join(out)


class MockLlm:
    """Deterministic offline backend for summarization, QA and keyword extraction."""

    def __init__(self, counter: TokenCounter = DEFAULT_COUNTER):
        self.counter = counter
        self.calls = 0
        self._lock = threading.Lock()

    def summarize(self, req: SummaryRequest) -> str:
        with self._lock:
            self.calls += 1
        return mock_summarize(req, self.counter)

    def answer(self, context: str, question: str, max_tokens: int = 1000) -> str:
        if not content_words(context) & content_words(question):
            return NO_INFORMATION
        text = mock_summarize(SummaryRequest(context, question, max_tokens), self.counter)
        return text or NO_INFORMATION

    def keywords(self, context: str, question: str, max_tokens: int = 100) -> str:
        counts = Counter(w.lower() for w in _WORD_RE.findall(context) if len(w) >= 4)
        top = [w for w, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:8]]
        return self.counter.truncate(" ".join(top), max_tokens)


class RemoteChat:
    def __init__(self, client: OpenAICompatClient, model: str):
        self.client = client
        self.model = model

    def __call__(self, system: str, user: str) -> str:
        return self.client.chat(self.model, system, user)


class RemoteLlm:
    """Chat-model backend rendering the prompt catalog; replies are cut to the token budget."""

    def __init__(self, chat: ChatFn, counter: TokenCounter = DEFAULT_COUNTER, max_parallel: int = 4):
        self.chat = chat
        self.counter = counter
        self.calls = 0
        self._lock = threading.Lock()
        self._slots = threading.BoundedSemaphore(max(1, max_parallel))

    def _complete(self, system: str, user: str) -> str:
        with self._slots:
            return self.chat(system, user)

    def summarize(self, req: SummaryRequest) -> str:
        return remote_summarize(self._complete, req, self.counter, self._count)

    def _count(self) -> None:
        with self._lock:
            self.calls += 1

    def answer(self, context: str, question: str, max_tokens: int = 1000) -> str:
        return qa_answer(self._complete, context, question, max_tokens, self.counter)

    def keywords(self, context: str, question: str, max_tokens: int = 100) -> str:
        system, user = render_prompt(
            "query_expand", {"context": context, "question": question, "max_tokens": max_tokens}
        )
        return self.counter.truncate(self._complete(system, user), max_tokens).strip()


def remote_summarize(
    chat: ChatFn,
    req: SummaryRequest,
    counter: TokenCounter = DEFAULT_COUNTER,
    on_call: Callable[[], None] | None = None,
) -> str:
    if req.question:
        template = "qf_summarize"
        bindings = {"context": req.context, "question": req.question, "max_tokens": req.max_tokens}
    else:
        template = "summarize"
        bindings = {"context": req.context, "max_tokens": req.max_tokens}
    system, user = render_prompt(template, bindings)
    if on_call:
        on_call()
    reply = chat(system, user)
    return counter.truncate(reply, req.max_tokens).strip()


def qa_answer(
    chat: ChatFn,
    context: str,
    question: str,
    max_tokens: int = 1000,
    counter: TokenCounter = DEFAULT_COUNTER,
) -> str:
    if not question.strip():
        raise ValueError("question must be non-empty")
    system, user = render_prompt(
        "qa", {"context": context, "question": question, "max_tokens": max_tokens}
    )
    return counter.truncate(chat(system, user), max_tokens).strip()


def is_unanswered(answer: str) -> bool:
    return answer.strip() == NO_INFORMATION


_RATING_RE = re.compile(r"\**\s*([1-5])\s*\**\.?")


def parse_coherence(reply: str) -> tuple[int, float]:
    lines = [line.strip() for line in reply.strip().splitlines() if line.strip()]
    if not lines:
        raise CoherenceParseError("empty rating reply")
    m = _RATING_RE.fullmatch(lines[-1])
    if not m:
        raise CoherenceParseError(f"final line is not an integer between 1 and 5: {lines[-1]!r}")
    rating = int(m.group(1))
    return rating, rating / 5.0


def coherence_rating(chat: ChatFn, question: str, answer: str) -> tuple[int, float]:
    system, user = render_prompt("coherence", {"question": question, "answer": answer})
    return parse_coherence(chat(system, user))
