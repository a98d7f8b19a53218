"""OpenAI-compatible client: retries, backoff, auth and response validation."""

from __future__ import annotations

import json

import httpx
import pytest

from raptree.remote import (
    MalformedResponseError,
    OpenAICompatClient,
    RemoteAuthError,
    RemoteError,
    RemoteTransportError,
)


def chat_reply(text: str) -> dict:
    return {"choices": [{"message": {"role": "assistant", "content": text}}]}


class Scripted:
    """Transport handler replaying a fixed list of responses (or exceptions)."""

    def __init__(self, *steps):
        self.steps = list(steps)
        self.requests: list[httpx.Request] = []

    def __call__(self, request: httpx.Request) -> httpx.Response:
        self.requests.append(request)
        step = self.steps.pop(0)
        if isinstance(step, Exception):
            raise step
        return step


def make_client(handler, **kw):
    sleeps: list[float] = []
    client = OpenAICompatClient(
        "http://llm.test/", kw.pop("api_key", "secret"), transport=httpx.MockTransport(handler), sleep=sleeps.append, **kw
    )
    return client, sleeps


class TestRetries:
    def test_rate_limit_then_success(self):
        handler = Scripted(httpx.Response(429), httpx.Response(429), httpx.Response(200, json=chat_reply("hi")))
        client, sleeps = make_client(handler, backoff_s=0.5)
        assert client.chat("m", "sys", "user") == "hi"
        assert len(handler.requests) == 3
        assert sleeps == [0.5, 1.0]

    def test_gives_up_after_max_retries(self):
        handler = Scripted(*[httpx.Response(503)] * 3)
        client, sleeps = make_client(handler, max_retries=2)
        with pytest.raises(RemoteTransportError) as info:
            client.chat("m", "s", "u")
        assert info.value.attempts == 3
        assert len(sleeps) == 2

    def test_connection_errors_are_retried(self):
        handler = Scripted(httpx.ConnectError("refused"), httpx.Response(200, json=chat_reply("ok")))
        client, _ = make_client(handler)
        assert client.chat("m", "s", "u") == "ok"

    def test_client_error_not_retried(self):
        handler = Scripted(httpx.Response(400, text="bad request"))
        client, sleeps = make_client(handler)
        with pytest.raises(RemoteError, match="400"):
            client.chat("m", "s", "u")
        assert sleeps == []


class TestAuth:
    def test_bearer_header_sent(self):
        handler = Scripted(httpx.Response(200, json=chat_reply("x")))
        client, _ = make_client(handler, api_key="tok")
        client.chat("m", "s", "u")
        assert handler.requests[0].headers["Authorization"] == "Bearer tok"

    def test_no_key_no_header(self):
        handler = Scripted(httpx.Response(200, json=chat_reply("x")))
        client, _ = make_client(handler, api_key=None)
        client.chat("m", "s", "u")
        assert "Authorization" not in handler.requests[0].headers

    @pytest.mark.parametrize("status", [401, 403])
    def test_rejected_credentials(self, status):
        handler = Scripted(httpx.Response(status))
        client, sleeps = make_client(handler)
        with pytest.raises(RemoteAuthError):
            client.chat("m", "s", "u")
        assert sleeps == []


class TestPayloads:
    def test_chat_request_shape(self):
        handler = Scripted(httpx.Response(200, json=chat_reply("x")))
        client, _ = make_client(handler)
        client.chat("gpt", "be brief", "hello")
        req = handler.requests[0]
        assert req.url == "http://llm.test/v1/chat/completions"
        assert json.loads(req.content) == {
            "model": "gpt",
            "messages": [{"role": "system", "content": "be brief"}, {"role": "user", "content": "hello"}],
        }

    def test_embeddings_sorted_by_index(self):
        body = {"data": [{"index": 1, "embedding": [2.0]}, {"index": 0, "embedding": [1.0]}]}
        client, _ = make_client(Scripted(httpx.Response(200, json=body)))
        assert client.embeddings("e", ["a", "b"]) == [[1.0], [2.0]]

    @pytest.mark.parametrize(
        "response",
        [
            httpx.Response(200, text="not json"),
            httpx.Response(200, json=[1, 2]),
            httpx.Response(200, json={"choices": []}),
            httpx.Response(200, json={"choices": [{"message": {"content": 5}}]}),
        ],
    )
    def test_malformed_chat(self, response):
        client, _ = make_client(Scripted(response))
        with pytest.raises(MalformedResponseError):
            client.chat("m", "s", "u")

    def test_embedding_count_mismatch(self):
        client, _ = make_client(Scripted(httpx.Response(200, json={"data": [{"index": 0, "embedding": [1.0]}]})))
        with pytest.raises(MalformedResponseError):
            client.embeddings("e", ["a", "b"])
