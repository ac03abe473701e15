import dataclasses
import json
import random

import pytest
import requests

from searchbench.gateway import (
    DEFAULT_THINKING_BUDGET,
    AnthropicDialect,
    AuthError,
    BackendRequest,
    BackendResponse,
    GatewayTimeout,
    HttpBackend,
    MalformedProviderReply,
    MockBackend,
    ModelGateway,
    OpenAIDialect,
    OracleBackend,
    ProviderHTTPError,
    RateLimited,
    RateLimiter,
    ResponseCache,
    call_with_retries,
    canonical_digest,
)
from searchbench.prompts import PromptMode, default_exemplars, render, render_refine
from searchbench.tasks import TaskKind


def _request(**overrides) -> BackendRequest:
    base = dict(
        model="m-1",
        system_text="sys",
        messages=(("user", "hello"),),
        temperature=0.0,
        max_tokens=128,
    )
    base.update(overrides)
    return BackendRequest(**base)


class _FakeReply:
    def __init__(self, status_code=200, body=None, text="", headers=None):
        self.status_code = status_code
        self._body = body
        self.text = text if text else (json.dumps(body) if body is not None else "")
        self.headers = headers or {}

    def json(self):
        if self._body is None:
            raise ValueError("no JSON body")
        return self._body


class _FakeSession:
    """requests.Session stand-in scripted with replies or exceptions."""

    def __init__(self, replies):
        self.replies = list(replies)
        self.posts = []

    def post(self, url, headers=None, json=None, timeout=None):
        self.posts.append({"url": url, "headers": headers, "json": json, "timeout": timeout})
        item = self.replies.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


ANTHROPIC_BODY = {
    "content": [
        {"type": "thinking", "thinking": "mull it over"},
        {"type": "text", "text": "the answer"},
    ],
    "usage": {"input_tokens": 10, "output_tokens": 4},
    "stop_reason": "end_turn",
}

OPENAI_BODY = {
    "choices": [
        {
            "message": {"content": "the answer", "reasoning_content": "mull it over"},
            "finish_reason": "stop",
        }
    ],
    "usage": {"prompt_tokens": 10, "completion_tokens": 4},
}


# ---------------------------------------------------------------------------
# Digests
# ---------------------------------------------------------------------------


def test_digest_is_stable_and_content_addressed():
    assert canonical_digest(_request()) == canonical_digest(_request())
    assert len(canonical_digest(_request())) == 64


@pytest.mark.parametrize(
    "change",
    [
        {"model": "m-2"},
        {"system_text": "other"},
        {"messages": (("user", "hello"), ("assistant", "hi"))},
        {"temperature": 0.7},
        {"max_tokens": 256},
        {"thinking": True},
        {"thinking_budget": 9000},
        {"sample_index": 1},
    ],
)
def test_digest_changes_with_every_field(change):
    assert canonical_digest(_request(**change)) != canonical_digest(_request())


# ---------------------------------------------------------------------------
# Response cache
# ---------------------------------------------------------------------------


def test_cache_round_trip_preserves_fields(tmp_path):
    cache = ResponseCache(tmp_path / "replies.jsonl")
    request = _request()
    response = BackendResponse(
        text="body",
        thinking_text="inner",
        prompt_tokens=7,
        completion_tokens=3,
        latency_ms=12,
        provider_meta={"stop_reason": "end_turn"},
    )
    digest = canonical_digest(request)
    assert cache.get(digest) is None
    cache.put(digest, request, response)
    got = cache.get(digest)
    assert got is not None
    assert (got.text, got.thinking_text, got.prompt_tokens) == ("body", "inner", 7)
    assert dict(got.provider_meta) == {"stop_reason": "end_turn"}
    assert len(cache) == 1


def test_cache_persists_across_instances(tmp_path):
    path = tmp_path / "replies.jsonl"
    first = ResponseCache(path)
    request = _request()
    first.put(canonical_digest(request), request, BackendResponse(text="kept"))
    second = ResponseCache(path)
    assert len(second) == 1
    assert second.get(canonical_digest(request)).text == "kept"


def test_cache_skips_corrupt_lines(tmp_path):
    path = tmp_path / "replies.jsonl"
    cache = ResponseCache(path)
    request = _request()
    cache.put(canonical_digest(request), request, BackendResponse(text="good"))
    with path.open("a", encoding="utf-8") as fh:
        fh.write("{this is not json\n")
    other = _request(model="m-2")
    cache.put(canonical_digest(other), other, BackendResponse(text="also good"))

    reloaded = ResponseCache(path)
    assert len(reloaded) == 2
    assert reloaded.skipped_lines == 1
    assert reloaded.get(canonical_digest(request)).text == "good"
    assert reloaded.get(canonical_digest(other)).text == "also good"


def test_cache_in_memory_without_path():
    cache = ResponseCache()
    request = _request()
    cache.put(canonical_digest(request), request, BackendResponse(text="x"))
    assert cache.get(canonical_digest(request)).text == "x"


# ---------------------------------------------------------------------------
# Rate limiting and retries
# ---------------------------------------------------------------------------


def test_rate_limiter_spaces_calls():
    sleeps = []
    limiter = RateLimiter(2.0, clock=lambda: 0.0, sleeper=sleeps.append)
    for _ in range(3):
        limiter.wait()
    assert sleeps == [0.5, 1.0]


def test_rate_limiter_disabled_at_zero():
    limiter = RateLimiter(0, clock=lambda: 0.0, sleeper=lambda s: pytest.fail("slept"))
    limiter.wait()
    limiter.wait()


def test_rate_limiter_rejects_negative():
    with pytest.raises(ValueError):
        RateLimiter(-1.0)


def test_retries_transient_then_succeeds():
    calls = {"n": 0}

    def flaky():
        calls["n"] += 1
        if calls["n"] < 3:
            raise RateLimited("busy")
        return BackendResponse(text="ok")

    sleeps = []
    got = call_with_retries(flaky, rng=random.Random(0), sleeper=sleeps.append)
    assert got.text == "ok"
    assert calls["n"] == 3
    assert len(sleeps) == 2
    # jittered exponential backoff: base·2^attempt·(0.5 + U[0,1))
    assert 0.5 <= sleeps[0] < 1.5
    assert 1.0 <= sleeps[1] < 3.0


def test_retries_honour_retry_after_floor():
    calls = {"n": 0}

    def flaky():
        calls["n"] += 1
        if calls["n"] == 1:
            raise RateLimited("busy", retry_after=30.0)
        return BackendResponse(text="ok")

    sleeps = []
    call_with_retries(flaky, rng=random.Random(1), sleeper=sleeps.append)
    assert sleeps[0] >= 30.0


def test_retries_exhaust_and_reraise():
    def always():
        raise GatewayTimeout("down")

    sleeps = []
    with pytest.raises(GatewayTimeout):
        call_with_retries(always, attempts=4, rng=random.Random(2), sleeper=sleeps.append)
    assert len(sleeps) == 3


@pytest.mark.parametrize("error", [AuthError("no"), MalformedProviderReply("bad")])
def test_permanent_errors_not_retried(error):
    calls = {"n": 0}

    def broken():
        calls["n"] += 1
        raise error

    with pytest.raises(type(error)):
        call_with_retries(broken, sleeper=lambda s: pytest.fail("slept"))
    assert calls["n"] == 1


# ---------------------------------------------------------------------------
# HTTP dialects
# ---------------------------------------------------------------------------


def test_anthropic_payload_plain_and_thinking():
    dialect = AnthropicDialect()
    plain = dialect.payload(_request(temperature=0.7))
    assert plain["temperature"] == 0.7
    assert plain["messages"] == [{"role": "user", "content": "hello"}]
    assert plain["system"] == "sys"
    assert "thinking" not in plain

    thinking = dialect.payload(_request(thinking=True))
    assert thinking["thinking"] == {
        "type": "enabled",
        "budget_tokens": DEFAULT_THINKING_BUDGET,
    }
    assert "temperature" not in thinking
    budgeted = dialect.payload(_request(thinking=True, thinking_budget=2048))
    assert budgeted["thinking"]["budget_tokens"] == 2048


def test_anthropic_headers_and_parse():
    dialect = AnthropicDialect()
    headers = dialect.headers("sekrit")
    assert headers["x-api-key"] == "sekrit"
    assert headers["anthropic-version"] == "2023-06-01"
    parsed = dialect.parse(ANTHROPIC_BODY, latency_ms=42)
    assert parsed.text == "the answer"
    assert parsed.thinking_text == "mull it over"
    assert parsed.prompt_tokens == 10 and parsed.completion_tokens == 4
    assert parsed.latency_ms == 42
    with pytest.raises(MalformedProviderReply):
        dialect.parse({"unexpected": True}, latency_ms=0)


def test_openai_payload_and_parse():
    dialect = OpenAIDialect()
    assert dialect.headers("sekrit")["Authorization"] == "Bearer sekrit"
    plain = dialect.payload(_request(temperature=0.7))
    assert plain["messages"][0] == {"role": "system", "content": "sys"}
    assert plain["messages"][1] == {"role": "user", "content": "hello"}
    assert "chat_template_kwargs" not in plain

    thinking = dialect.payload(_request(thinking=True, thinking_budget=2048))
    assert thinking["chat_template_kwargs"] == {
        "enable_thinking": True,
        "thinking_budget": 2048,
    }
    parsed = dialect.parse(OPENAI_BODY, latency_ms=7)
    assert parsed.text == "the answer"
    assert parsed.thinking_text == "mull it over"
    with pytest.raises(MalformedProviderReply):
        dialect.parse({"choices": []}, latency_ms=0)


def test_http_backend_rejects_unknown_dialect():
    with pytest.raises(ValueError):
        HttpBackend("http://x", dialect="grpc")


def test_http_backend_requires_api_key(monkeypatch):
    monkeypatch.delenv("SOME_KEY", raising=False)
    session = _FakeSession([])
    backend = HttpBackend("http://x", api_key_env="SOME_KEY", session=session)
    with pytest.raises(AuthError):
        backend.complete(_request())
    assert session.posts == []


def test_http_backend_happy_path(monkeypatch):
    monkeypatch.setenv("SOME_KEY", "sekrit")
    session = _FakeSession([_FakeReply(200, ANTHROPIC_BODY)])
    backend = HttpBackend(
        "http://provider/v1/messages", api_key_env="SOME_KEY",
        timeout_s=9.0, session=session,
    )
    got = backend.complete(_request())
    assert got.text == "the answer"
    post = session.posts[0]
    assert post["url"] == "http://provider/v1/messages"
    assert post["timeout"] == 9.0
    assert post["headers"]["x-api-key"] == "sekrit"


@pytest.mark.parametrize(
    "status, expected",
    [
        (401, AuthError),
        (403, AuthError),
        (429, RateLimited),
        (408, GatewayTimeout),
        (500, GatewayTimeout),
        (503, GatewayTimeout),
        (418, ProviderHTTPError),
    ],
)
def test_http_backend_status_mapping(monkeypatch, status, expected):
    monkeypatch.setenv("SOME_KEY", "sekrit")
    session = _FakeSession([_FakeReply(status, text="nope")])
    backend = HttpBackend("http://x", api_key_env="SOME_KEY", session=session)
    with pytest.raises(expected):
        backend.complete(_request())


def test_http_backend_extracts_retry_after(monkeypatch):
    monkeypatch.setenv("SOME_KEY", "sekrit")
    session = _FakeSession([_FakeReply(429, text="slow down", headers={"retry-after": "17"})])
    backend = HttpBackend("http://x", api_key_env="SOME_KEY", session=session)
    with pytest.raises(RateLimited) as info:
        backend.complete(_request())
    assert info.value.retry_after == 17.0


def test_http_backend_transport_and_body_failures(monkeypatch):
    monkeypatch.setenv("SOME_KEY", "sekrit")
    backend = HttpBackend(
        "http://x", api_key_env="SOME_KEY",
        session=_FakeSession([requests.Timeout("slow")]),
    )
    with pytest.raises(GatewayTimeout):
        backend.complete(_request())
    backend = HttpBackend(
        "http://x", api_key_env="SOME_KEY",
        session=_FakeSession([requests.ConnectionError("refused")]),
    )
    with pytest.raises(GatewayTimeout):
        backend.complete(_request())
    backend = HttpBackend(
        "http://x", api_key_env="SOME_KEY",
        session=_FakeSession([_FakeReply(200, body=None, text="<html>oops</html>")]),
    )
    with pytest.raises(MalformedProviderReply):
        backend.complete(_request())


# ---------------------------------------------------------------------------
# Test doubles
# ---------------------------------------------------------------------------


def test_mock_backend_scripted_and_callable():
    scripted = MockBackend(["one", "two"])
    texts = [scripted.complete(_request()).text for _ in range(4)]
    assert texts == ["one", "two", "two", "two"]
    assert len(scripted.calls) == 4

    echo = MockBackend(lambda req: req.messages[-1][1].upper())
    assert echo.complete(_request()).text == "HELLO"


def _flat(sample_instances):
    return [inst for group in sample_instances.values() for inst in group]


def test_oracle_answers_rendered_prompts(sample_instances):
    instances = _flat(sample_instances)
    oracle = OracleBackend(instances)
    inst = instances[0]
    bundle = render(inst, PromptMode.COT, default_exemplars(inst.kind, PromptMode.COT))
    request = _request(system_text=bundle.system_text, messages=(("user", bundle.body),))
    reply = oracle.complete(request)
    assert "Here is" in reply.text
    assert oracle.calls == 1


def test_oracle_reads_first_user_message_in_refine_history(sample_instances):
    instances = _flat(sample_instances)
    oracle = OracleBackend(instances)
    inst = instances[0]
    bundle = render(inst, PromptMode.COT, default_exemplars(inst.kind, PromptMode.COT))
    follow = render_refine(bundle, "a wrong first attempt")
    history = (
        ("user", bundle.body),
        ("assistant", "a wrong first attempt"),
        ("user", follow.body),
    )
    reply = oracle.complete(_request(messages=history))
    assert "Here is" in reply.text


def test_oracle_rejects_unknown_or_markerless_prompts(sample_instances):
    instances = _flat(sample_instances)
    oracle = OracleBackend(instances[:1])
    with pytest.raises(MalformedProviderReply):
        oracle.complete(_request(messages=(("user", "no marker here"),)))
    stranger = instances[-1]
    assert stranger.kind is not instances[0].kind
    bundle = render(
        stranger, PromptMode.DIRECT, default_exemplars(stranger.kind, PromptMode.DIRECT)
    )
    with pytest.raises(MalformedProviderReply):
        oracle.complete(_request(messages=(("user", bundle.body),)))


# ---------------------------------------------------------------------------
# Gateway facade
# ---------------------------------------------------------------------------


def test_gateway_caches_and_counts(tmp_path):
    backend = MockBackend(["fresh"])
    gateway = ModelGateway(backend, cache=ResponseCache(tmp_path / "c.jsonl"))
    request = _request()
    assert gateway.complete(request).text == "fresh"
    assert gateway.complete(request).text == "fresh"
    assert len(backend.calls) == 1
    assert gateway.cache_stats == {"hits": 1, "misses": 1, "entries": 1}


def test_gateway_separates_sample_indices():
    backend = MockBackend(["a", "b"])
    gateway = ModelGateway(backend)
    first = gateway.complete(_request(sample_index=0))
    second = gateway.complete(_request(sample_index=1))
    assert (first.text, second.text) == ("a", "b")
    assert len(backend.calls) == 2


def test_gateway_retries_through_backend():
    calls = {"n": 0}

    class Flaky:
        def complete(self, request):
            calls["n"] += 1
            if calls["n"] < 3:
                raise GatewayTimeout("hiccup")
            return BackendResponse(text="eventually")

    sleeps = []
    gateway = ModelGateway(Flaky(), rng=random.Random(3), sleeper=sleeps.append)
    assert gateway.complete(_request()).text == "eventually"
    assert calls["n"] == 3 and len(sleeps) == 2
    # success is cached; a replay touches neither backend nor sleeper
    assert gateway.complete(_request()).text == "eventually"
    assert calls["n"] == 3


def test_requests_and_responses_are_frozen():
    request = _request()
    with pytest.raises(dataclasses.FrozenInstanceError):
        request.model = "other"
    response = BackendResponse(text="x")
    with pytest.raises(dataclasses.FrozenInstanceError):
        response.text = "y"
