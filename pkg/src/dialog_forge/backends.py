"""Agent backends and the single entry point for invoking them.

Every backend takes a PromptPayload and returns raw model text. The remote
backend speaks the agent wire protocol (POST <base_uri>/invoke) with
bounded retries, exponential backoff, and a per-endpoint rate limiter;
transports are injectable so tests can record traffic.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import requests

from .errors import (
    EmptyResponse,
    ProtocolError,
    RemoteUnavailable,
    ScriptExhausted,
)
from .prompts import PromptPayload

WireResponse = tuple[int, dict]  # (http status, parsed json body)
Transport = Callable[[str, dict, dict, float], WireResponse]


class AgentBackend(Protocol):
    """Anything that can answer a prompt payload with raw text."""

    label: str

    def invoke_payload(self, payload: PromptPayload) -> str: ...


def invoke(endpoint: AgentBackend, payload: PromptPayload) -> str:
    """Invoke a backend and enforce the non-blank response contract."""
    text = endpoint.invoke_payload(payload)
    if text is None or not text.strip():
        raise EmptyResponse(f"backend {endpoint.label!r} returned blank text")
    return text


def healthcheck(base_uri: str, timeout: float = 5.0) -> bool:
    try:
        resp = requests.get(base_uri.rstrip("/") + "/healthz", timeout=timeout)
        return resp.status_code == 200
    except requests.RequestException:
        return False


class RateLimiter:
    """Token bucket shared by all workers hitting one endpoint."""

    def __init__(self, rate_per_s: float | None, clock=time.monotonic, sleep=time.sleep):
        self.rate = rate_per_s
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._next_free = 0.0

    def acquire(self) -> None:
        if not self.rate:
            return
        interval = 1.0 / self.rate
        with self._lock:
            now = self._clock()
            wait = self._next_free - now
            self._next_free = max(self._next_free, now) + interval
        if wait > 0:
            self._sleep(wait)


def _http_transport(url: str, body: dict, headers: dict, timeout: float) -> WireResponse:
    resp = requests.post(url, json=body, headers=headers, timeout=timeout)
    try:
        parsed = resp.json()
    except ValueError as exc:
        raise ProtocolError(f"non-JSON response from {url}: {exc}") from exc
    return resp.status_code, parsed


@dataclass
class RemoteEndpoint:
    """Backend behind the agent wire protocol.

    ``auth_ref`` names an environment variable holding the bearer token;
    the token itself never appears in configs or artifacts. A transient
    failure (connection error, 5xx) is retried up to ``max_retries`` times
    with exponential backoff, so at most 1 + max_retries attempts are made.
    """

    base_uri: str
    auth_ref: str | None = None
    timeout: float = 60.0
    max_retries: int = 2
    rate_limit: float | None = None
    backoff_base: float = 0.5
    transport: Transport | None = None
    _limiter: RateLimiter = field(init=False, repr=False)
    _sleep: Callable[[float], None] = field(default=time.sleep, repr=False)

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        self._limiter = RateLimiter(self.rate_limit)

    @property
    def label(self) -> str:
        return f"remote:{self.base_uri}"

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.auth_ref:
            token = os.environ.get(self.auth_ref)
            if token:
                headers["Authorization"] = f"Bearer {token}"
        return headers

    def invoke_payload(self, payload: PromptPayload) -> str:
        url = self.base_uri.rstrip("/") + "/invoke"
        transport = self.transport or _http_transport
        body = payload.to_wire()
        headers = self._headers()
        last_error: Exception | None = None
        for attempt in range(1 + self.max_retries):
            if attempt:
                self._sleep(self.backoff_base * (2 ** (attempt - 1)))
            self._limiter.acquire()
            try:
                status, parsed = transport(url, body, headers, self.timeout)
            except (requests.RequestException, ConnectionError, TimeoutError) as exc:
                last_error = exc
                continue
            if status >= 500:
                last_error = ProtocolError(f"server error {status}: {parsed}")
                continue
            if status != 200 or "error" in parsed:
                err = parsed.get("error", {}) if isinstance(parsed, dict) else {}
                raise ProtocolError(
                    f"endpoint rejected request ({status}): "
                    f"{err.get('code', 'unknown')}: {err.get('message', parsed)}"
                )
            if "text" not in parsed:
                raise ProtocolError(f"response missing 'text' field: {parsed}")
            return parsed["text"]
        raise RemoteUnavailable(
            f"{url} unavailable after {1 + self.max_retries} attempts: {last_error}"
        )


class ScriptedEndpoint:
    """Replays a canned response list, one pop per invocation."""

    def __init__(self, responses: Sequence[str], label: str = "scripted"):
        self._responses = list(responses)
        self._cursor = 0
        self._lock = threading.Lock()
        self.label = label

    def remaining(self) -> int:
        return len(self._responses) - self._cursor

    def invoke_payload(self, payload: PromptPayload) -> str:
        with self._lock:
            if self._cursor >= len(self._responses):
                raise ScriptExhausted(
                    f"script {self.label!r} exhausted after {self._cursor} responses"
                )
            text = self._responses[self._cursor]
            self._cursor += 1
        return text


class CallableEndpoint:
    """Adapts a plain function; handy for test doubles and judges."""

    def __init__(self, fn: Callable[[PromptPayload], str], label: str = "callable"):
        self._fn = fn
        self.label = label

    def invoke_payload(self, payload: PromptPayload) -> str:
        return self._fn(payload)


class RecordingEndpoint:
    """Wraps any backend and records the payloads that pass through."""

    def __init__(self, inner: AgentBackend):
        self.inner = inner
        self.payloads: list[PromptPayload] = []
        self._lock = threading.Lock()

    @property
    def label(self) -> str:
        return self.inner.label

    def invoke_payload(self, payload: PromptPayload) -> str:
        with self._lock:
            self.payloads.append(payload)
        return self.inner.invoke_payload(payload)


class RecordingTransport:
    """Scripted wire transport that tracks attempts and concurrency.

    ``delay`` keeps each call in flight long enough for overlap to be
    observable when asserting concurrency bounds.
    """

    def __init__(self, outcomes: Sequence[WireResponse | Exception], delay: float = 0.0):
        self.outcomes = list(outcomes)
        self.delay = delay
        self.requests: list[dict] = []
        self.in_flight = 0
        self.max_in_flight = 0
        self._lock = threading.Lock()

    def __call__(self, url: str, body: dict, headers: dict, timeout: float) -> WireResponse:
        with self._lock:
            self.requests.append(
                {"url": url, "body": body, "headers": headers, "timeout": timeout}
            )
            index = len(self.requests) - 1
            self.in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self.in_flight)
        try:
            if self.delay:
                time.sleep(self.delay)
            outcome = self.outcomes[min(index, len(self.outcomes) - 1)]
            if isinstance(outcome, Exception):
                raise outcome
            return outcome
        finally:
            with self._lock:
                self.in_flight -= 1
