"""Backends for every model call in the pipeline.

Three kinds:

* scripted   -- per-tag FIFO queues of canned completions (tests, replays)
* rulebased  -- a pure function of the request (offline diagnostics; the
                concrete rule set lives in :mod:`hintpipe.llm.rules`)
* http       -- OpenAI-compatible chat-completions endpoint with retries

Every completed call is appended to the backend's call log with a unique id
so rollouts can prove that each call's tokens land in exactly one ledger.
"""

from __future__ import annotations

import os
import threading
import time
from collections import deque
from dataclasses import dataclass
from typing import Callable

import requests

from .tokens import count_tokens

TAGS = ("agent_turn", "hint_extraction", "rerank", "classify")
# Re-ranking and classification must be reproducible when the backend honors
# sampling parameters, so their requests are pinned to temperature 0.
DETERMINISTIC_TAGS = ("rerank", "classify")


class BackendError(RuntimeError):
    pass


class ScriptedQueueUnderflow(BackendError):
    pass


class RetriesExhausted(BackendError):
    pass


@dataclass(frozen=True)
class CompletionRequest:
    messages: tuple[tuple[str, str], ...]
    max_tokens: int
    temperature: float
    tag: str

    def __post_init__(self) -> None:
        if self.tag not in TAGS:
            raise ValueError(f"unknown request tag: {self.tag!r}")
        if self.tag in DETERMINISTIC_TAGS and self.temperature != 0:
            raise ValueError(f"{self.tag} requests must use temperature 0")

    @property
    def full_text(self) -> str:
        return "\n".join(text for _, text in self.messages)


@dataclass(frozen=True)
class CompletionResult:
    text: str
    prompt_tokens: int
    completion_tokens: int
    backend_reported: bool
    call_id: int


@dataclass(frozen=True)
class CallRecord:
    call_id: int
    tag: str
    prompt_tokens: int
    completion_tokens: int


class Backend:
    """Base class: thread-safe call logging plus the `complete` contract."""

    kind = "abstract"

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._next_id = 0
        self.call_log: list[CallRecord] = []

    def complete(self, request: CompletionRequest) -> CompletionResult:
        text, reported = self._complete_text(request)
        if reported is None:
            prompt_tokens = count_tokens(request.full_text)
            completion_tokens = count_tokens(text)
            backend_reported = False
        else:
            prompt_tokens, completion_tokens = reported
            backend_reported = True
        with self._lock:
            call_id = self._next_id
            self._next_id += 1
            self.call_log.append(
                CallRecord(call_id, request.tag, prompt_tokens, completion_tokens)
            )
        return CompletionResult(
            text=text,
            prompt_tokens=prompt_tokens,
            completion_tokens=completion_tokens,
            backend_reported=backend_reported,
            call_id=call_id,
        )

    def _complete_text(self, request: CompletionRequest) -> tuple[str, tuple[int, int] | None]:
        raise NotImplementedError


class ScriptedBackend(Backend):
    """Dequeues canned completions per tag. Never touches the network."""

    kind = "scripted"

    def __init__(self, queues: dict[str, list[str]] | None = None) -> None:
        super().__init__()
        self._queues: dict[str, deque[str]] = {tag: deque() for tag in TAGS}
        for tag, items in (queues or {}).items():
            self._queues[tag].extend(items)
        self._queue_lock = threading.Lock()

    def push(self, tag: str, *texts: str) -> None:
        with self._queue_lock:
            self._queues[tag].extend(texts)

    def _complete_text(self, request: CompletionRequest) -> tuple[str, None]:
        with self._queue_lock:
            queue = self._queues[request.tag]
            if not queue:
                raise ScriptedQueueUnderflow(f"no scripted completion queued for {request.tag!r}")
            return queue.popleft(), None


class RuleBasedBackend(Backend):
    """Deterministic diagnostic backend: each tag maps to a pure rule
    function of the rendered prompt text."""

    kind = "rulebased"

    def __init__(self, rules: dict[str, Callable[[str], str]]) -> None:
        super().__init__()
        unknown = set(rules) - set(TAGS)
        if unknown:
            raise ValueError(f"rules for unknown tags: {sorted(unknown)}")
        self._rules = dict(rules)

    def _complete_text(self, request: CompletionRequest) -> tuple[str, None]:
        rule = self._rules.get(request.tag)
        if rule is None:
            raise BackendError(f"no rule installed for tag {request.tag!r}")
        return rule(request.full_text), None


class HttpBackend(Backend):
    """OpenAI-compatible chat-completions client.

    The API key comes from an environment variable only; endpoint and model
    name come from configuration. Retries with exponential backoff on 429,
    5xx, and connection errors.
    """

    kind = "http"

    RETRYABLE = {429, 500, 502, 503, 504}

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_env: str = "HINTPIPE_API_KEY",
        max_retries: int = 3,
        backoff: float = 0.5,
        timeout: float = 60.0,
    ) -> None:
        super().__init__()
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.api_key = os.environ.get(api_key_env, "")
        self.max_retries = max_retries
        self.backoff = backoff
        self.timeout = timeout

    def _complete_text(self, request: CompletionRequest) -> tuple[str, tuple[int, int] | None]:
        payload = {
            "model": self.model,
            "messages": [{"role": role, "content": text} for role, text in request.messages],
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            if attempt:
                time.sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                response = requests.post(
                    f"{self.endpoint}/chat/completions",
                    json=payload,
                    headers=headers,
                    timeout=self.timeout,
                )
            except requests.RequestException as exc:
                last_error = exc
                continue
            if response.status_code in self.RETRYABLE:
                last_error = BackendError(f"HTTP {response.status_code}")
                continue
            if response.status_code != 200:
                raise BackendError(f"HTTP {response.status_code}: {response.text[:200]}")
            body = response.json()
            text = body["choices"][0]["message"]["content"]
            usage = body.get("usage") or {}
            if "prompt_tokens" in usage and "completion_tokens" in usage:
                return text, (int(usage["prompt_tokens"]), int(usage["completion_tokens"]))
            return text, None
        raise RetriesExhausted(f"request failed after {self.max_retries} attempts: {last_error}")
