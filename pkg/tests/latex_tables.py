"""Read role/content prompt tables out of a LaTeX source, one table per caption."""

from __future__ import annotations

import re
from pathlib import Path

_ESCAPES = {r"\{": "{", r"\}": "}", r"\_": "_"}


def _clean(cell: str) -> str:
    cell = cell.replace(r"\hline", "")
    cell = re.sub(r"\\\\\s*$", "", cell.strip())
    for src, dst in _ESCAPES.items():
        cell = cell.replace(src, dst)
    return cell.strip()


def prompt_table(source: str | Path, caption: str) -> dict[str, str]:
    """{"system": ..., "user": ...} with continuation rows joined by newlines."""
    text = Path(source).read_text(encoding="utf-8")
    start = text.index(f"\\caption{{{caption}")
    body = text[start: text.index(r"\end{tabular}", start)]
    body = body[body.index(r"\textbf{Content}"):].split("\n", 1)[1]
    rows: dict[str, list[str]] = {}
    role = None
    for line in body.splitlines():
        if not line.strip() or line.strip() == r"\hline":
            continue
        head, _, cell = line.partition("&")
        if head.strip() in ("system", "user"):
            role = head.strip()
            rows[role] = []
        if role is not None:
            cleaned = _clean(cell)
            if cleaned:
                rows[role].append(cleaned)
    return {role: "\n".join(lines) for role, lines in rows.items()}
