"""Chat-completion backends: a scripted fixture table and an HTTP client.

Both expose ``complete(ChatRequest) -> ChatResponse``. ``RecordingBackend``
wraps either one and logs every exchange for token accounting.
"""
from __future__ import annotations

import fnmatch
import logging
import math
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence, Union

import httpx

log = logging.getLogger(__name__)

DEFAULT_MODEL = "gpt-3.5-turbo-0613"
API_KEY_ENV = "OPENAI_API_KEY"
BASE_URL_ENV = "OPENAI_BASE_URL"
DEFAULT_BASE_URL = "https://api.openai.com/v1"
ROLES = ("system", "user", "assistant")


class BackendUnavailable(RuntimeError):
    pass


class FixtureMiss(LookupError):
    pass


@dataclass(frozen=True)
class Message:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown chat role {self.role!r}")


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[Message, ...]
    temperature: float = 0.0
    max_tokens: int = 256

    def __post_init__(self):
        if not self.messages:
            raise ValueError("a chat request needs at least one message")
        if any(m.role == "system" for m in self.messages[1:]):
            raise ValueError("only the first message may be a system message")

    @classmethod
    def of(cls, *pairs: tuple[str, str], **kwargs) -> ChatRequest:
        return cls(tuple(Message(r, c) for r, c in pairs), **kwargs)

    def last_user(self) -> str:
        for m in reversed(self.messages):
            if m.role == "user":
                return m.content
        return ""

    def prompt_chars(self) -> int:
        return sum(len(m.content) for m in self.messages)


@dataclass(frozen=True)
class ChatResponse:
    content: str
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be non-negative")

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens


class ChatBackend(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...


def estimate_tokens(prompt_chars: int, reply_chars: int) -> tuple[int, int]:
    """chars/4 estimate; the two parts always sum to ceil(total / 4)."""
    total = math.ceil((prompt_chars + reply_chars) / 4)
    prompt = math.ceil(prompt_chars / 4)
    return prompt, total - prompt


Reply = Union[str, Callable[[ChatRequest], str]]


@dataclass(frozen=True)
class Fixture:
    pattern: str
    reply: Reply


class ScriptedBackend:
    """Replies from a fixture table keyed on the last user message.

    Matching tries every exact pattern, then every prefix, then glob
    wildcards (``*``, ``?``); the first registered fixture wins within a
    tier. A reply may be a callable of the request, which must be pure.
    Token counts are estimated, not measured.
    """

    def __init__(self, fixtures: Sequence[Fixture | tuple[str, Reply]] = ()):
        self.fixtures = [f if isinstance(f, Fixture) else Fixture(*f)
                         for f in fixtures]

    def register(self, pattern: str, reply: Reply) -> None:
        self.fixtures.append(Fixture(pattern, reply))

    def match(self, prompt: str) -> Fixture:
        for f in self.fixtures:
            if prompt == f.pattern:
                return f
        for f in self.fixtures:
            if prompt.startswith(f.pattern):
                return f
        for f in self.fixtures:
            if any(c in f.pattern for c in "*?[") and fnmatch.fnmatchcase(
                    prompt, f.pattern):
                return f
        raise FixtureMiss(f"no fixture matches prompt {prompt[:80]!r}")

    def complete(self, request: ChatRequest) -> ChatResponse:
        fixture = self.match(request.last_user())
        reply = fixture.reply(request) if callable(fixture.reply) \
            else fixture.reply
        prompt_tokens, completion_tokens = estimate_tokens(
            request.prompt_chars(), len(reply))
        return ChatResponse(reply, prompt_tokens, completion_tokens)

    @classmethod
    def from_directory(cls, path: str | Path) -> ScriptedBackend:
        """Load ``*.txt`` fixtures: the pattern, a line ``---``, the reply."""
        fixtures = []
        for file in sorted(Path(path).glob("*.txt")):
            text = file.read_text(encoding="utf-8")
            pattern, sep, reply = text.partition("\n---\n")
            if not sep:
                raise ValueError(f"{file}: missing '---' separator")
            fixtures.append(Fixture(pattern.strip("\n"), reply.rstrip("\n")))
        return cls(fixtures)


_TRANSIENT_STATUS = {408, 409, 429, 500, 502, 503, 504}


class HTTPBackend:
    """Client for any chat-completions compatible endpoint."""

    def __init__(self, model: str = DEFAULT_MODEL, base_url: str | None = None,
                 api_key: str | None = None, max_in_flight: int = 4,
                 retries: int = 3, backoff_base: float = 1.0,
                 timeout: float = 60.0, transport: httpx.BaseTransport | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.model = model
        self.base_url = (base_url or os.environ.get(BASE_URL_ENV)
                         or DEFAULT_BASE_URL).rstrip("/")
        self._api_key = api_key if api_key is not None else os.environ.get(
            API_KEY_ENV, "")
        self.retries = retries
        self.backoff_base = backoff_base
        self._sleep = sleep
        self._gate = threading.BoundedSemaphore(max_in_flight)
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def __repr__(self) -> str:
        return f"HTTPBackend(model={self.model!r}, base_url={self.base_url!r})"

    def payload(self, request: ChatRequest) -> dict:
        return {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content}
                         for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }

    def complete(self, request: ChatRequest) -> ChatResponse:
        url = f"{self.base_url}/chat/completions"
        headers = {"Authorization": f"Bearer {self._api_key}"}
        last_error = "no attempt made"
        for attempt in range(self.retries + 1):
            if attempt:
                delay = self.backoff_base * 2 ** (attempt - 1)
                log.info("retrying chat request in %.1fs (%s)", delay,
                         last_error)
                self._sleep(delay)
            try:
                with self._gate:
                    resp = self._client.post(url, json=self.payload(request),
                                             headers=headers)
            except httpx.TransportError as exc:
                last_error = type(exc).__name__
                continue
            if resp.status_code in _TRANSIENT_STATUS:
                last_error = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                raise BackendUnavailable(
                    f"chat endpoint returned HTTP {resp.status_code}")
            data = resp.json()
            usage = data.get("usage") or {}
            return ChatResponse(
                data["choices"][0]["message"]["content"] or "",
                int(usage.get("prompt_tokens", 0)),
                int(usage.get("completion_tokens", 0)))
        raise BackendUnavailable(
            f"chat endpoint unavailable after {self.retries} retries "
            f"({last_error})")


@dataclass
class CallRecord:
    role: str
    messages: list[dict]
    reply: str
    prompt_tokens: int
    completion_tokens: int


@dataclass
class UsageLog:
    calls: list[CallRecord] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def add(self, record: CallRecord) -> None:
        with self._lock:
            self.calls.append(record)

    def totals(self) -> dict[str, dict[str, int]]:
        out: dict[str, dict[str, int]] = {}
        for c in self.calls:
            t = out.setdefault(c.role, {"prompt_tokens": 0,
                                        "completion_tokens": 0, "calls": 0})
            t["prompt_tokens"] += c.prompt_tokens
            t["completion_tokens"] += c.completion_tokens
            t["calls"] += 1
        return out

    @property
    def total_tokens(self) -> int:
        return sum(c.prompt_tokens + c.completion_tokens for c in self.calls)


class RecordingBackend:
    """Logs each exchange verbatim under ``role`` before returning it."""

    def __init__(self, inner: ChatBackend, usage: UsageLog, role: str):
        self.inner = inner
        self.usage = usage
        self.role = role

    def complete(self, request: ChatRequest) -> ChatResponse:
        resp = self.inner.complete(request)
        self.usage.add(CallRecord(
            self.role, [{"role": m.role, "content": m.content}
                        for m in request.messages],
            resp.content, resp.prompt_tokens, resp.completion_tokens))
        return resp
