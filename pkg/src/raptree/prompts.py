"""Prompt catalog for summarization, question answering, rating and query expansion."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping

PLACEHOLDERS = ("context", "question", "max_tokens", "answer", "questions")
_PLACEHOLDER_RE = re.compile(r"\{(" + "|".join(PLACEHOLDERS) + r")\}")

HELPFUL = "You are a helpful assistant."
NO_INFORMATION = "No information is provided in the sources."


class PromptError(KeyError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    system: str
    user: str

    @property
    def placeholders(self) -> set[str]:
        return set(_PLACEHOLDER_RE.findall(self.system)) | set(_PLACEHOLDER_RE.findall(self.user))


TEMPLATES: dict[str, PromptTemplate] = {
    t.id: t
    for t in [
        PromptTemplate(
            "summarize",
            HELPFUL,
            "Write a summary of the following, including as many key details as possible "
            "using at most {max_tokens} tokens:\n"
            "{context}",
        ),
        PromptTemplate(
            "qf_summarize",
            HELPFUL,
            "Summarize the information in the retrieved documents using at most {max_tokens} "
            "tokens. Make sure to include in your summary all the details that can be used to "
            "answer the question and omit any details that are entirely irrelevant to the question.\n"
            "Retrieved documents: {context}\n"
            "Question: {question}\n"
            "Summary:",
        ),
        PromptTemplate(
            "coherence",
            HELPFUL,
            "You are given a question and an answer. Your task is to evaluate whether the provided "
            "answer could have been generated by a human expert, focusing on the coherence of the "
            "response. Assess how logically and smoothly the ideas are connected, how well the "
            "answer flows, and whether it maintains a clear and consistent structure. Provide a "
            "brief explanation of your reasoning, and then rate the likelihood on a scale of 1 to 5, "
            "where:\n"
            "1: Very unlikely to have been generated by a human expert (e.g., disjointed or lacking "
            "logical flow)\n"
            "2: Unlikely (e.g., partially coherent but ideas do not flow well or seem disconnected)\n"
            "3: Possibly (e.g., somewhat coherent but with noticeable breaks in flow or structure)\n"
            "4: Likely (e.g., mostly coherent with minor disruptions in flow or structure)\n"
            "5: Very likely to have been generated by a human expert (e.g., highly coherent, "
            "logically structured, and well-organized).\n"
            "The final line of your output must be an integer between 1 and 5.\n"
            "Question: {question}\n"
            "Answer: {answer}",
        ),
        PromptTemplate(
            "qa",
            "You are a Question Answering Portal. Given a question with relevant information "
            "sources, your task is to respond to the question using ONLY information from the "
            "provided sources. Ensure that the facts included are directly related to answering "
            'the question. If the sources do not provide an answer, reply with "' + NO_INFORMATION + '"',
            "Sources: {context}\n"
            "Question: {question}\n"
            "Generate an answer with at most {max_tokens} tokens.\n"
            "Answer:",
        ),
        PromptTemplate(
            "one_shot_qfs",
            HELPFUL,
            "Instruction: You will be given a query and a set of documents. Your task is to "
            "generate an informative, fluent, and accurate query-focused summary. To do so, you "
            "should obtain a query-focused summary step by step.\n"
            "Step 1: Query-Relevant Information Identification\n"
            "In this step, you will be given a query and a set of documents. Your task is to find "
            "and identify query-relevant information from each document. This relevant information "
            "can be at any level, such as phrases, sentences, or paragraphs.\n"
            "Step 2: Controllable Summarization\n"
            "In this step, you should take the query and query-relevant information obtained from "
            "Step 1 as inputs. Your task is to summarize this information. The summary should be "
            "concise, include only non-redundant, query-relevant evidence. The output summary must "
            "consist of at most {max_tokens} tokens.\n"
            "Query: {question}\n"
            "Documents: {context}",
        ),
        PromptTemplate(
            "query_expand",
            HELPFUL,
            "Write a list of keywords for the given question based on the following context. "
            "Use at most {max_tokens} tokens:\n"
            "Sources: {context}\n"
            "Question: {question}\n"
            "Keywords:",
        ),
    ]
}


def _substitute(text: str, bindings: Mapping[str, object]) -> str:
    def repl(m: re.Match[str]) -> str:
        name = m.group(1)
        if name not in bindings:
            raise PromptError(f"unbound placeholder {{{name}}}")
        return str(bindings[name])

    return _PLACEHOLDER_RE.sub(repl, text)


def render_prompt(
    template_id: str,
    bindings: Mapping[str, object],
    templates: Mapping[str, PromptTemplate] = TEMPLATES,
) -> tuple[str, str]:
    """Return (system, user) with every placeholder replaced in a single pass."""
    try:
        template = templates[template_id]
    except KeyError:
        raise PromptError(f"unknown prompt template {template_id!r}") from None
    return _substitute(template.system, bindings), _substitute(template.user, bindings)


def templates_as_dict(templates: Mapping[str, PromptTemplate] = TEMPLATES) -> dict[str, dict[str, str]]:
    return {tid: {"system": t.system, "user": t.user} for tid, t in sorted(templates.items())}


def templates_from_dict(data: Mapping[str, Mapping[str, str]]) -> dict[str, PromptTemplate]:
    return {tid: PromptTemplate(tid, d["system"], d["user"]) for tid, d in data.items()}
