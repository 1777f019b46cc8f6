"""Provider-agnostic chat-model client with text and image parts.

Two backends ship: a remote client speaking chat-completions-compatible JSON
over HTTPS, and a scripted backend that replays canned replies so every agent
and validator test is deterministic and offline.
"""

from __future__ import annotations

import base64
import json
import os
import re
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import requests


class GatewayError(Exception):
    """Base class for chat-gateway failures."""


class TransportError(GatewayError):
    """Transient transport failure; safe to retry."""


class ProviderError(GatewayError):
    """Non-retryable provider rejection (auth, malformed request, quota)."""


class UnscriptedRequest(GatewayError):
    """A scripted backend received a request no rule or queued reply covers."""


@dataclass(frozen=True)
class ContentPart:
    """Exactly one of text or PNG image bytes."""

    kind: str  # "text" | "image"
    text: str = ""
    image_png: bytes = b""

    def __post_init__(self) -> None:
        if self.kind not in ("text", "image"):
            raise ValueError(f"unknown content part kind {self.kind!r}")
        if self.kind == "image" and not self.image_png:
            raise ValueError("image part requires non-empty PNG bytes")


def text_part(text: str) -> ContentPart:
    return ContentPart(kind="text", text=text)


def image_part(png: bytes) -> ContentPart:
    return ContentPart(kind="image", image_png=png)


@dataclass(frozen=True)
class Message:
    role: str  # system | user | assistant
    parts: list[ContentPart]

    def __post_init__(self) -> None:
        if self.role not in ("system", "user", "assistant"):
            raise ValueError(f"unknown message role {self.role!r}")


def text_message(role: str, text: str) -> Message:
    return Message(role=role, parts=[text_part(text)])


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    messages: list[Message]
    temperature: float = 0.0
    max_output_tokens: int = 1024

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("chat request needs at least one message")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be >= 1")

    def flat_text(self) -> str:
        """All text parts joined, with image parts as placeholders (script matching)."""
        chunks: list[str] = []
        for message in self.messages:
            for part in message.parts:
                chunks.append(part.text if part.kind == "text" else "<image>")
        return "\n".join(chunks)

    def image_count(self) -> int:
        return sum(1 for m in self.messages for p in m.parts if p.kind == "image")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    finish_reason: str = "stop"
    prompt_tokens: int = 0
    output_tokens: int = 0


class Backend(Protocol):
    """Anything that can answer a chat request."""

    def complete(self, request: ChatRequest) -> ChatResponse: ...


# -- wire format (chat-completions-compatible JSON) ---------------------------------


def request_to_wire(request: ChatRequest) -> dict:
    messages = []
    for message in request.messages:
        content = []
        for part in message.parts:
            if part.kind == "text":
                content.append({"type": "text", "text": part.text})
            else:
                encoded = base64.b64encode(part.image_png).decode("ascii")
                content.append(
                    {"type": "image_url", "image_url": {"url": f"data:image/png;base64,{encoded}"}}
                )
        messages.append({"role": message.role, "content": content})
    return {
        "model": request.model_id,
        "messages": messages,
        "temperature": request.temperature,
        "max_tokens": request.max_output_tokens,
    }


def request_from_wire(body: dict) -> ChatRequest:
    messages = []
    for raw in body["messages"]:
        parts = []
        for item in raw["content"]:
            if item["type"] == "text":
                parts.append(text_part(item["text"]))
            elif item["type"] == "image_url":
                url = item["image_url"]["url"]
                prefix = "data:image/png;base64,"
                if not url.startswith(prefix):
                    raise ValueError(f"unsupported image url {url[:32]!r}")
                parts.append(image_part(base64.b64decode(url[len(prefix):])))
            else:
                raise ValueError(f"unknown content type {item['type']!r}")
        messages.append(Message(role=raw["role"], parts=parts))
    return ChatRequest(
        model_id=body["model"],
        messages=messages,
        temperature=body.get("temperature", 0.0),
        max_output_tokens=body.get("max_tokens", 1024),
    )


def response_from_wire(body: dict) -> ChatResponse:
    try:
        choice = body["choices"][0]
        usage = body.get("usage", {})
        return ChatResponse(
            text=choice["message"]["content"] or "",
            finish_reason=choice.get("finish_reason", "stop"),
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            output_tokens=int(usage.get("completion_tokens", 0)),
        )
    except (KeyError, IndexError, TypeError) as exc:
        raise ProviderError(f"malformed completion response: {exc}") from exc


# -- backends ---------------------------------------------------------------------


@dataclass
class ScriptRule:
    """Pattern-matched canned reply; ``replies`` are consumed in order."""

    pattern: str
    replies: list[str]
    repeat_last: bool = False
    used: int = 0

    def next_reply(self) -> str:
        if self.used < len(self.replies):
            reply = self.replies[self.used]
            self.used += 1
            return reply
        if self.repeat_last and self.replies:
            return self.replies[-1]
        raise UnscriptedRequest(f"script rule {self.pattern!r} exhausted after {self.used} replies")


class ScriptedBackend:
    """Deterministic backend: pattern rules first, then a FIFO reply queue.

    Rules are checked in order against the request's flattened text; identical
    request sequences always produce identical response sequences. Access is
    serialized so concurrent harness workers can share one instance.
    """

    def __init__(self, replies: Sequence[str] = (), rules: Sequence[ScriptRule] = ()) -> None:
        self._queue = deque(replies)
        self._rules = list(rules)
        self._lock = threading.Lock()
        self.requests: list[ChatRequest] = []

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            self.requests.append(request)
            flat = request.flat_text()
            for rule in self._rules:
                if re.search(rule.pattern, flat, flags=re.DOTALL):
                    return ChatResponse(text=rule.next_reply())
            if self._queue:
                return ChatResponse(text=self._queue.popleft())
        raise UnscriptedRequest(
            f"no scripted reply for request starting {flat[:120]!r}"
        )


def load_script_rules(path: str) -> list[ScriptRule]:
    """Read a JSON list of {match, replies, repeat_last?} rule objects."""
    with open(path, encoding="utf-8") as handle:
        raw = json.load(handle)
    rules = []
    for i, item in enumerate(raw):
        try:
            rules.append(
                ScriptRule(
                    pattern=item["match"],
                    replies=list(item["replies"]),
                    repeat_last=bool(item.get("repeat_last", False)),
                )
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"{path}: rule {i} is malformed: {exc}") from exc
    return rules


class RemoteBackend:
    """Chat-completions-compatible HTTP backend.

    The credential is read from the environment variable named by
    ``api_key_env`` (default ``LLM_API_KEY``) at request time.
    """

    def __init__(
        self,
        api_base: str,
        api_key_env: str = "LLM_API_KEY",
        timeout: float = 60.0,
        session: requests.Session | None = None,
    ) -> None:
        self.api_base = api_base.rstrip("/")
        self.api_key_env = api_key_env
        self.timeout = timeout
        self._session = session or requests.Session()

    def complete(self, request: ChatRequest) -> ChatResponse:
        key = os.environ.get(self.api_key_env, "")
        if not key:
            raise ProviderError(f"credential env var {self.api_key_env} is not set")
        try:
            resp = self._session.post(
                f"{self.api_base}/chat/completions",
                json=request_to_wire(request),
                headers={"Authorization": f"Bearer {key}"},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code >= 500:
            raise TransportError(f"server error {resp.status_code}")
        if resp.status_code >= 400:
            raise ProviderError(f"provider rejected request: {resp.status_code} {resp.text[:200]}")
        try:
            body = resp.json()
        except ValueError as exc:
            raise TransportError(f"non-JSON response body: {exc}") from exc
        return response_from_wire(body)


# -- retry wrapper -----------------------------------------------------------------


@dataclass(frozen=True)
class RetryPolicy:
    max_retries: int = 2
    base_backoff: float = 0.5

    def __post_init__(self) -> None:
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.base_backoff < 0:
            raise ValueError("base_backoff must be >= 0")


def complete(
    backend: Backend,
    request: ChatRequest,
    retry: RetryPolicy = RetryPolicy(),
    sleep: Callable[[float], None] = time.sleep,
) -> ChatResponse:
    """Call the backend, retrying transient transport failures with exponential backoff."""
    last: TransportError | None = None
    for attempt in range(retry.max_retries + 1):
        try:
            return backend.complete(request)
        except TransportError as exc:
            last = exc
            if attempt < retry.max_retries:
                sleep(retry.base_backoff * (2**attempt))
    assert last is not None
    raise last
