"""Minimal OpenAI-compatible HTTP client with retry and exponential backoff."""

from __future__ import annotations

import logging
import time
from typing import Any, Callable

import httpx

logger = logging.getLogger(__name__)

RETRYABLE_STATUS = frozenset({408, 409, 429, 500, 502, 503, 504})


class RemoteError(Exception):
    """Base class for failures talking to a remote model endpoint."""


class RemoteAuthError(RemoteError):
    pass


class RemoteTransportError(RemoteError):
    """The endpoint stayed unreachable or kept failing transiently after all retries."""

    def __init__(self, message: str, attempts: int):
        super().__init__(f"{message} (after {attempts} attempts)")
        self.attempts = attempts


class MalformedResponseError(RemoteError):
    pass


class OpenAICompatClient:
    def __init__(
        self,
        base_url: str,
        api_key: str | None,
        *,
        timeout_s: float = 60.0,
        max_retries: int = 4,
        backoff_s: float = 0.5,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self._sleep = sleep
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._http = httpx.Client(timeout=timeout_s, headers=headers, transport=transport)

    def close(self) -> None:
        self._http.close()

    def post_json(self, path: str, body: dict[str, Any]) -> dict[str, Any]:
        url = f"{self.base_url}{path}"
        attempts = 0
        last = "no attempt made"
        while attempts <= self.max_retries:
            if attempts:
                delay = self.backoff_s * 2 ** (attempts - 1)
                logger.debug("retrying %s in %.2fs (%s)", url, delay, last)
                self._sleep(delay)
            attempts += 1
            try:
                resp = self._http.post(url, json=body)
            except httpx.TransportError as exc:
                last = f"{type(exc).__name__}: {exc}"
                continue
            if resp.status_code in (401, 403):
                raise RemoteAuthError(f"{url} rejected credentials (HTTP {resp.status_code})")
            if resp.status_code in RETRYABLE_STATUS:
                last = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                raise RemoteError(f"{url} returned HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                payload = resp.json()
            except ValueError as exc:
                raise MalformedResponseError(f"{url} returned non-JSON body") from exc
            if not isinstance(payload, dict):
                raise MalformedResponseError(f"{url} returned {type(payload).__name__}, expected object")
            return payload
        raise RemoteTransportError(f"{url} failed: {last}", attempts)

    def embeddings(self, model: str, inputs: list[str]) -> list[list[float]]:
        payload = self.post_json("/v1/embeddings", {"model": model, "input": inputs})
        try:
            data = payload["data"]
            vectors = [item["embedding"] for item in sorted(data, key=lambda d: d.get("index", 0))]
        except (KeyError, TypeError) as exc:
            raise MalformedResponseError("embeddings response lacks data[i].embedding") from exc
        if len(vectors) != len(inputs):
            raise MalformedResponseError(f"expected {len(inputs)} embeddings, got {len(vectors)}")
        return vectors

    def chat(self, model: str, system: str, user: str) -> str:
        body = {
            "model": model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        }
        payload = self.post_json("/v1/chat/completions", body)
        try:
            content = payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedResponseError("chat response lacks choices[0].message.content") from exc
        if not isinstance(content, str):
            raise MalformedResponseError("chat message content is not a string")
        return content
