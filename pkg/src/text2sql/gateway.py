"""Chat-completion gateway with live, recording, and replay backends.

All backends speak the same ``complete(exchange) -> ChatCompletion`` interface.
Responses are cached (and replayed) as one JSON file per request fingerprint so
that batch runs are resumable and test runs are fully deterministic offline.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import requests

from .errors import AuthenticationError, CacheMissError, GatewayError, RateLimitExhausted

log = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if not self.content:
            raise ValueError("message content is empty")


@dataclass(frozen=True)
class ChatExchange:
    """One request: ordered messages plus sampling parameters."""

    messages: tuple[ChatMessage, ...]
    n: int = 1
    temperature: float = 1.0
    model_name: str = "gpt-3.5-turbo-0301"
    max_output_tokens: int = 512

    def __post_init__(self) -> None:
        if not self.messages or self.messages[-1].role != "user":
            raise ValueError("last message must have role user")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be >= 1")


@dataclass(frozen=True)
class TokenUsage:
    prompt_tokens: int
    completion_tokens: int


@dataclass(frozen=True)
class ChatCompletion:
    texts: tuple[str, ...]
    usage: TokenUsage | None = None


def exchange_payload(exchange: ChatExchange) -> dict:
    """Wire/cache payload for an exchange (OpenAI-compatible field names)."""
    return {
        "model": exchange.model_name,
        "messages": [{"role": m.role, "content": m.content} for m in exchange.messages],
        "n": exchange.n,
        "temperature": exchange.temperature,
        "max_tokens": exchange.max_output_tokens,
    }


def request_fingerprint(exchange: ChatExchange) -> str:
    """Stable hex digest over the canonical serialization of a request."""
    canonical = json.dumps(
        exchange_payload(exchange), sort_keys=True, ensure_ascii=True, separators=(",", ":")
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class CacheStore:
    """Directory of ``<fingerprint>.json`` files holding request and response."""

    def __init__(self, directory: Path | str):
        self.directory = Path(directory)
        self._write_lock = threading.Lock()

    def path_for(self, fingerprint: str) -> Path:
        return self.directory / f"{fingerprint}.json"

    def load(self, fingerprint: str) -> ChatCompletion | None:
        path = self.path_for(fingerprint)
        if not path.is_file():
            return None
        entry = json.loads(path.read_text(encoding="utf-8"))
        usage = entry.get("usage")
        return ChatCompletion(
            texts=tuple(entry["texts"]),
            usage=TokenUsage(**usage) if usage else None,
        )

    def store(self, fingerprint: str, exchange: ChatExchange, completion: ChatCompletion) -> None:
        entry = {
            "fingerprint": fingerprint,
            "request": exchange_payload(exchange),
            "texts": list(completion.texts),
            "usage": None
            if completion.usage is None
            else {
                "prompt_tokens": completion.usage.prompt_tokens,
                "completion_tokens": completion.usage.completion_tokens,
            },
        }
        payload = json.dumps(entry, indent=2, sort_keys=True)
        with self._write_lock:
            self.directory.mkdir(parents=True, exist_ok=True)
            # Atomic publish so readers never see partial files.
            fd, tmp_name = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
            try:
                with os.fdopen(fd, "w", encoding="utf-8") as handle:
                    handle.write(payload)
                os.replace(tmp_name, self.path_for(fingerprint))
            except BaseException:
                if os.path.exists(tmp_name):
                    os.unlink(tmp_name)
                raise

    def fingerprints(self) -> list[str]:
        if not self.directory.is_dir():
            return []
        return sorted(p.stem for p in self.directory.glob("*.json"))

    def load_request(self, fingerprint: str) -> dict | None:
        path = self.path_for(fingerprint)
        if not path.is_file():
            return None
        return json.loads(path.read_text(encoding="utf-8")).get("request")


class ReplayGateway:
    """Pure function of fingerprint: returns recorded responses, nothing else."""

    def __init__(self, cache: CacheStore):
        self.cache = cache

    def complete(self, exchange: ChatExchange) -> ChatCompletion:
        fingerprint = request_fingerprint(exchange)
        completion = self.cache.load(fingerprint)
        if completion is None:
            raise CacheMissError(fingerprint)
        return completion


class LiveGateway:
    """HTTP chat-completions client with bounded concurrency and retries."""

    RETRYABLE_STATUS = (429, 500, 502, 503, 504)

    def __init__(
        self,
        base_url: str,
        api_key: str,
        *,
        max_attempts: int = 5,
        backoff_seconds: float = 1.0,
        request_timeout: float = 120.0,
        max_inflight: int = 4,
        session: requests.Session | None = None,
    ):
        if not api_key:
            raise AuthenticationError("no API key configured for the live backend")
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.max_attempts = max_attempts
        self.backoff_seconds = backoff_seconds
        self.request_timeout = request_timeout
        self._session = session or requests.Session()
        self._inflight = threading.BoundedSemaphore(max_inflight)

    def complete(self, exchange: ChatExchange) -> ChatCompletion:
        body = exchange_payload(exchange)
        headers = {"Authorization": f"Bearer {self.api_key}"}
        url = f"{self.base_url}/chat/completions"
        last_error: Exception | None = None
        rate_limited = False

        for attempt in range(self.max_attempts):
            if attempt:
                time.sleep(self.backoff_seconds * 2 ** (attempt - 1))
            try:
                with self._inflight:
                    response = self._session.post(
                        url, json=body, headers=headers, timeout=self.request_timeout
                    )
            except requests.RequestException as exc:
                last_error = exc
                log.warning("transport failure (attempt %d): %s", attempt + 1, exc)
                continue
            if response.status_code in (401, 403):
                raise AuthenticationError(
                    f"completion endpoint rejected credentials (HTTP {response.status_code})"
                )
            if response.status_code in self.RETRYABLE_STATUS:
                rate_limited = rate_limited or response.status_code == 429
                last_error = GatewayError(f"HTTP {response.status_code}: {response.text[:200]}")
                log.warning("retryable response (attempt %d): HTTP %s", attempt + 1, response.status_code)
                continue
            if response.status_code != 200:
                raise GatewayError(f"HTTP {response.status_code}: {response.text[:500]}")
            return self._parse_response(response.json(), exchange)

        if rate_limited:
            raise RateLimitExhausted(f"rate limited after {self.max_attempts} attempts: {last_error}")
        raise GatewayError(f"request failed after {self.max_attempts} attempts: {last_error}")

    @staticmethod
    def _parse_response(payload: dict, exchange: ChatExchange) -> ChatCompletion:
        choices = payload.get("choices") or []
        texts = tuple(choice.get("message", {}).get("content") or "" for choice in choices)
        if len(texts) != exchange.n:
            raise GatewayError(
                f"backend returned {len(texts)} completions for a request with n={exchange.n}"
            )
        usage = payload.get("usage")
        token_usage = None
        if usage:
            token_usage = TokenUsage(
                prompt_tokens=int(usage.get("prompt_tokens", 0)),
                completion_tokens=int(usage.get("completion_tokens", 0)),
            )
            log.debug(
                "token usage: prompt=%d completion=%d",
                token_usage.prompt_tokens,
                token_usage.completion_tokens,
            )
        return ChatCompletion(texts=texts, usage=token_usage)


class RecordingGateway:
    """Cache-first wrapper over a transport; persists every new response."""

    def __init__(self, transport, cache: CacheStore):
        self.transport = transport
        self.cache = cache

    def complete(self, exchange: ChatExchange) -> ChatCompletion:
        fingerprint = request_fingerprint(exchange)
        cached = self.cache.load(fingerprint)
        if cached is not None:
            return cached
        completion = self.transport.complete(exchange)
        if len(completion.texts) != exchange.n:
            raise GatewayError(
                f"transport returned {len(completion.texts)} completions for n={exchange.n}"
            )
        self.cache.store(fingerprint, exchange, completion)
        return completion
