"""Model backends: HTTP dialects, caching, rate limiting and test doubles.

``ModelGateway`` is the single entry point: it answers requests from an
append-only JSONL cache when it can, and otherwise rate-limits, calls the
backend with jittered-exponential retries, and records the reply.  Requests
are identified by a canonical digest of their full content, so identical
requests are never paid for twice and a warm cache can replay an entire run
without network access.

Backends implement one method, ``complete(request) -> BackendResponse``:

* ``HttpBackend``   -- real providers, in either of two wire dialects.
* ``OracleBackend`` -- answers with the exact solver's solution for the
  instance whose statement appears in the prompt (pipeline self-check).
* ``MockBackend``   -- scripted replies for tests.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

import requests

from .answers import canonical_text
from .prompts import statement_text
from .tasks import ProblemInstance, TaskError


class GatewayError(TaskError):
    """Base class for backend/transport failures."""


class AuthError(GatewayError):
    """The provider rejected our credentials; retrying cannot help."""


class RateLimited(GatewayError):
    """The provider asked us to slow down."""

    def __init__(self, message: str, retry_after: float | None = None) -> None:
        super().__init__(message)
        self.retry_after = retry_after


class GatewayTimeout(GatewayError):
    """The provider did not answer in time (or answered 5xx)."""


class MalformedProviderReply(GatewayError):
    """The provider answered, but not in the shape the dialect promises."""


class ProviderHTTPError(GatewayError):
    """An HTTP status outside the taxonomy above; not retried."""


# ---------------------------------------------------------------------------
# Requests and responses
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BackendRequest:
    """One completion request.

    ``messages`` alternates (role, content) pairs, roles "user"/"assistant".
    ``sample_index`` distinguishes otherwise-identical requests so parallel
    samples get distinct cache entries.
    """

    model: str
    system_text: str
    messages: tuple[tuple[str, str], ...]
    temperature: float = 0.0
    max_tokens: int = 4096
    thinking: bool = False
    thinking_budget: int | None = None
    sample_index: int = 0


@dataclass(frozen=True)
class BackendResponse:
    text: str
    thinking_text: str = ""
    prompt_tokens: int = 0
    completion_tokens: int = 0
    thinking_tokens: int = 0
    latency_ms: int = 0
    provider_meta: Mapping[str, object] = field(default_factory=dict)


def canonical_digest(request: BackendRequest) -> str:
    """Stable content digest of a request (sha256 of its sorted JSON form)."""
    doc = {
        "model": request.model,
        "system": request.system_text,
        "messages": [list(m) for m in request.messages],
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
        "thinking": request.thinking,
        "thinking_budget": request.thinking_budget,
        "sample_index": request.sample_index,
    }
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _response_to_json(response: BackendResponse) -> dict:
    return {
        "text": response.text,
        "thinking_text": response.thinking_text,
        "prompt_tokens": response.prompt_tokens,
        "completion_tokens": response.completion_tokens,
        "thinking_tokens": response.thinking_tokens,
        "latency_ms": response.latency_ms,
        "provider_meta": dict(response.provider_meta),
    }


def _response_from_json(data: dict) -> BackendResponse:
    return BackendResponse(
        text=data["text"],
        thinking_text=data.get("thinking_text", ""),
        prompt_tokens=data.get("prompt_tokens", 0),
        completion_tokens=data.get("completion_tokens", 0),
        thinking_tokens=data.get("thinking_tokens", 0),
        latency_ms=data.get("latency_ms", 0),
        provider_meta=data.get("provider_meta", {}),
    )


class Backend(Protocol):
    def complete(self, request: BackendRequest) -> BackendResponse: ...


# ---------------------------------------------------------------------------
# Response cache
# ---------------------------------------------------------------------------


class ResponseCache:
    """Append-only JSONL cache keyed by request digest.

    Writes are serialized through one lock; reads go against the in-memory
    snapshot without locking.  Corrupt lines (e.g. from a killed process) are
    skipped on load so a damaged cache degrades to misses, never to errors.
    """

    def __init__(self, path: str | Path | None = None) -> None:
        self._path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._entries: dict[str, BackendResponse] = {}
        self.skipped_lines = 0
        if self._path is not None and self._path.exists():
            with open(self._path, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        record = json.loads(line)
                        self._entries[record["digest"]] = _response_from_json(
                            record["response"]
                        )
                    except (json.JSONDecodeError, KeyError, TypeError):
                        self.skipped_lines += 1

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, digest: str) -> BackendResponse | None:
        return self._entries.get(digest)

    def put(self, digest: str, request: BackendRequest, response: BackendResponse) -> None:
        record = {
            "digest": digest,
            "model": request.model,
            "response": _response_to_json(response),
        }
        with self._lock:
            if digest in self._entries:
                return
            if self._path is not None:
                self._path.parent.mkdir(parents=True, exist_ok=True)
                with open(self._path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record, sort_keys=True) + "\n")
            self._entries[digest] = response


# ---------------------------------------------------------------------------
# Rate limiting and retries
# ---------------------------------------------------------------------------


class RateLimiter:
    """Process-wide minimum spacing between calls; clock/sleep injectable."""

    def __init__(
        self,
        requests_per_second: float,
        clock: Callable[[], float] = time.monotonic,
        sleeper: Callable[[float], None] = time.sleep,
    ) -> None:
        if requests_per_second < 0:
            raise ValueError("requests_per_second must be >= 0")
        self._interval = 1.0 / requests_per_second if requests_per_second else 0.0
        self._clock = clock
        self._sleeper = sleeper
        self._lock = threading.Lock()
        self._next_slot = 0.0

    def wait(self) -> None:
        if not self._interval:
            return
        with self._lock:
            now = self._clock()
            delay = self._next_slot - now
            self._next_slot = max(now, self._next_slot) + self._interval
        if delay > 0:
            self._sleeper(delay)


RETRY_ATTEMPTS = 5
RETRY_BASE_DELAY = 1.0


def call_with_retries(
    fn: Callable[[], BackendResponse],
    attempts: int = RETRY_ATTEMPTS,
    base_delay: float = RETRY_BASE_DELAY,
    rng: random.Random | None = None,
    sleeper: Callable[[float], None] = time.sleep,
) -> BackendResponse:
    """Retry transient failures with jittered exponential backoff.

    Only RateLimited and GatewayTimeout are retried; auth errors and
    malformed replies surface immediately.
    """
    rng = rng or random.Random()
    last: GatewayError | None = None
    for attempt in range(attempts):
        try:
            return fn()
        except (RateLimited, GatewayTimeout) as err:
            last = err
            if attempt == attempts - 1:
                break
            delay = base_delay * (2 ** attempt) * (0.5 + rng.random())
            if isinstance(err, RateLimited) and err.retry_after:
                delay = max(delay, err.retry_after)
            sleeper(delay)
    assert last is not None
    raise last


# ---------------------------------------------------------------------------
# HTTP dialects
# ---------------------------------------------------------------------------

DEFAULT_THINKING_BUDGET = 16000


class AnthropicDialect:
    """Messages-style wire format: x-api-key header, content blocks."""

    name = "anthropic"

    def headers(self, api_key: str) -> dict[str, str]:
        return {
            "x-api-key": api_key,
            "anthropic-version": "2023-06-01",
            "content-type": "application/json",
        }

    def payload(self, request: BackendRequest) -> dict:
        doc: dict = {
            "model": request.model,
            "max_tokens": request.max_tokens,
            "messages": [
                {"role": role, "content": content}
                for role, content in request.messages
            ],
        }
        if request.system_text:
            doc["system"] = request.system_text
        if request.thinking:
            doc["thinking"] = {
                "type": "enabled",
                "budget_tokens": request.thinking_budget or DEFAULT_THINKING_BUDGET,
            }
        else:
            doc["temperature"] = request.temperature
        return doc

    def parse(self, data: dict, latency_ms: int) -> BackendResponse:
        try:
            blocks = data["content"]
            text = "".join(b.get("text", "") for b in blocks if b.get("type") == "text")
            thinking = "".join(
                b.get("thinking", "") for b in blocks if b.get("type") == "thinking"
            )
            usage = data.get("usage", {})
            return BackendResponse(
                text=text,
                thinking_text=thinking,
                prompt_tokens=usage.get("input_tokens", 0),
                completion_tokens=usage.get("output_tokens", 0),
                latency_ms=latency_ms,
                provider_meta={"stop_reason": data.get("stop_reason")},
            )
        except (KeyError, TypeError, AttributeError) as err:
            raise MalformedProviderReply(f"unexpected reply shape: {err}") from err


class OpenAIDialect:
    """Chat-completions wire format: Bearer auth, choices list."""

    name = "openai"

    def headers(self, api_key: str) -> dict[str, str]:
        return {
            "Authorization": f"Bearer {api_key}",
            "content-type": "application/json",
        }

    def payload(self, request: BackendRequest) -> dict:
        messages = []
        if request.system_text:
            messages.append({"role": "system", "content": request.system_text})
        messages.extend(
            {"role": role, "content": content} for role, content in request.messages
        )
        doc: dict = {
            "model": request.model,
            "messages": messages,
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        }
        if request.thinking:
            kwargs: dict = {"enable_thinking": True}
            if request.thinking_budget:
                kwargs["thinking_budget"] = request.thinking_budget
            doc["chat_template_kwargs"] = kwargs
        return doc

    def parse(self, data: dict, latency_ms: int) -> BackendResponse:
        try:
            message = data["choices"][0]["message"]
            usage = data.get("usage", {})
            return BackendResponse(
                text=message.get("content") or "",
                thinking_text=message.get("reasoning_content") or "",
                prompt_tokens=usage.get("prompt_tokens", 0),
                completion_tokens=usage.get("completion_tokens", 0),
                latency_ms=latency_ms,
                provider_meta={
                    "finish_reason": data["choices"][0].get("finish_reason")
                },
            )
        except (KeyError, IndexError, TypeError, AttributeError) as err:
            raise MalformedProviderReply(f"unexpected reply shape: {err}") from err


DIALECTS = {AnthropicDialect.name: AnthropicDialect, OpenAIDialect.name: OpenAIDialect}


class HttpBackend:
    """A real provider endpoint in one of the known dialects.

    The API key is read from the environment variable named by
    ``api_key_env`` at call time, never stored in configs or caches.
    """

    def __init__(
        self,
        url: str,
        dialect: str = AnthropicDialect.name,
        api_key_env: str = "ANTHROPIC_API_KEY",
        timeout_s: float = 120.0,
        session: requests.Session | None = None,
    ) -> None:
        if dialect not in DIALECTS:
            raise ValueError(f"unknown dialect {dialect!r}; know {sorted(DIALECTS)}")
        self.url = url
        self.dialect = DIALECTS[dialect]()
        self.api_key_env = api_key_env
        self.timeout_s = timeout_s
        self._session = session or requests.Session()

    def complete(self, request: BackendRequest) -> BackendResponse:
        api_key = os.environ.get(self.api_key_env, "")
        if not api_key:
            raise AuthError(f"environment variable {self.api_key_env} is not set")
        started = time.monotonic()
        try:
            reply = self._session.post(
                self.url,
                headers=self.dialect.headers(api_key),
                json=self.dialect.payload(request),
                timeout=self.timeout_s,
            )
        except requests.Timeout as err:
            raise GatewayTimeout(f"no reply within {self.timeout_s}s") from err
        except requests.RequestException as err:
            raise GatewayTimeout(f"transport failure: {err}") from err
        latency_ms = int((time.monotonic() - started) * 1000)
        if reply.status_code in (401, 403):
            raise AuthError(f"provider rejected credentials ({reply.status_code})")
        if reply.status_code == 429:
            retry_after = None
            header = reply.headers.get("retry-after")
            if header:
                try:
                    retry_after = float(header)
                except ValueError:
                    retry_after = None
            raise RateLimited("provider rate limit (429)", retry_after=retry_after)
        if reply.status_code >= 500 or reply.status_code == 408:
            raise GatewayTimeout(f"provider unavailable ({reply.status_code})")
        if reply.status_code != 200:
            raise ProviderHTTPError(
                f"unexpected status {reply.status_code}: {reply.text[:200]}"
            )
        try:
            data = reply.json()
        except ValueError as err:
            raise MalformedProviderReply("reply body is not JSON") from err
        return self.dialect.parse(data, latency_ms)


# ---------------------------------------------------------------------------
# Test doubles
# ---------------------------------------------------------------------------


class MockBackend:
    """Scripted backend: pops replies in order, repeating the last one.

    ``script`` may also be a callable mapping the request to reply text.
    Every request is recorded in ``calls``.
    """

    def __init__(
        self,
        script: Sequence[str] | Callable[[BackendRequest], str] = ("",),
    ) -> None:
        self._fn = script if callable(script) else None
        self._queue = list(script) if not callable(script) else []
        self.calls: list[BackendRequest] = []
        self._lock = threading.Lock()

    def complete(self, request: BackendRequest) -> BackendResponse:
        with self._lock:
            self.calls.append(request)
            if self._fn is not None:
                text = self._fn(request)
            elif len(self._queue) > 1:
                text = self._queue.pop(0)
            elif self._queue:
                text = self._queue[0]
            else:
                text = ""
        return BackendResponse(
            text=text,
            prompt_tokens=sum(len(c) for _, c in request.messages) // 4,
            completion_tokens=len(text) // 4,
        )


TARGET_MARKER = "### Target Question ###"


class OracleBackend:
    """Answers any rendered prompt with the registered instance's exact solution.

    Instances are looked up by the statement text that follows the target
    marker in the first user message, so the oracle exercises the same
    prompt → answer → verify path as a real model — with a guaranteed
    correct answer.
    """

    def __init__(self, instances: Sequence[ProblemInstance] = ()) -> None:
        self._by_statement: dict[str, ProblemInstance] = {}
        self.calls = 0
        self._lock = threading.Lock()
        for inst in instances:
            self.register(inst)

    def register(self, instance: ProblemInstance) -> None:
        self._by_statement[statement_text(instance.payload)] = instance

    def complete(self, request: BackendRequest) -> BackendResponse:
        with self._lock:
            self.calls += 1
        first_user = next(
            (content for role, content in request.messages if role == "user"), ""
        )
        if TARGET_MARKER not in first_user:
            raise MalformedProviderReply("prompt has no target-question marker")
        statement = first_user.split(TARGET_MARKER, 1)[1].strip()
        instance = self._by_statement.get(statement)
        if instance is None:
            raise MalformedProviderReply("target statement not registered with oracle")
        text = canonical_text(instance.payload, instance.ground_truth)
        return BackendResponse(text=text, completion_tokens=len(text) // 4)


# ---------------------------------------------------------------------------
# The gateway facade
# ---------------------------------------------------------------------------


class ModelGateway:
    """Cache → rate limit → retries → backend; safe for concurrent callers."""

    def __init__(
        self,
        backend: Backend,
        cache: ResponseCache | None = None,
        rate_limiter: RateLimiter | None = None,
        attempts: int = RETRY_ATTEMPTS,
        base_delay: float = RETRY_BASE_DELAY,
        rng: random.Random | None = None,
        sleeper: Callable[[float], None] = time.sleep,
    ) -> None:
        self.backend = backend
        self.cache = cache if cache is not None else ResponseCache()
        self.rate_limiter = rate_limiter or RateLimiter(0)
        self.attempts = attempts
        self.base_delay = base_delay
        self._rng = rng or random.Random()
        self._sleeper = sleeper
        self._stats_lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def complete(self, request: BackendRequest) -> BackendResponse:
        digest = canonical_digest(request)
        cached = self.cache.get(digest)
        if cached is not None:
            with self._stats_lock:
                self.hits += 1
            return cached
        with self._stats_lock:
            self.misses += 1

        def attempt() -> BackendResponse:
            self.rate_limiter.wait()
            return self.backend.complete(request)

        response = call_with_retries(
            attempt,
            attempts=self.attempts,
            base_delay=self.base_delay,
            rng=self._rng,
            sleeper=self._sleeper,
        )
        self.cache.put(digest, request, response)
        return response

    @property
    def cache_stats(self) -> dict[str, int]:
        with self._stats_lock:
            return {"hits": self.hits, "misses": self.misses, "entries": len(self.cache)}
