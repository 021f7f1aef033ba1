from __future__ import annotations

import json
import threading

import pytest

from text2sql.errors import AuthenticationError, CacheMissError, GatewayError, RateLimitExhausted
from text2sql.gateway import (
    CacheStore,
    ChatCompletion,
    ChatExchange,
    ChatMessage,
    LiveGateway,
    RecordingGateway,
    ReplayGateway,
    request_fingerprint,
)


def _exchange(content="hello", n=1, temperature=1.0):
    return ChatExchange(
        messages=(ChatMessage("user", content),),
        n=n,
        temperature=temperature,
    )


def test_fingerprint_deterministic():
    assert request_fingerprint(_exchange()) == request_fingerprint(_exchange())


def test_fingerprint_sensitive_to_temperature():
    assert request_fingerprint(_exchange(temperature=0.0)) != request_fingerprint(
        _exchange(temperature=1.0)
    )


def test_fingerprint_sensitive_to_message_order():
    first = ChatExchange(
        messages=(
            ChatMessage("system", "a"),
            ChatMessage("user", "b"),
        )
    )
    second = ChatExchange(
        messages=(
            ChatMessage("system", "b"),
            ChatMessage("user", "a"),
        )
    )
    assert request_fingerprint(first) != request_fingerprint(second)


def test_exchange_requires_trailing_user_message():
    with pytest.raises(ValueError):
        ChatExchange(messages=(ChatMessage("system", "x"),))
    with pytest.raises(ValueError):
        ChatExchange(messages=(ChatMessage("user", "x"),), n=0)


def test_replay_returns_stored_texts_byte_identical(tmp_path):
    cache = CacheStore(tmp_path)
    exchange = _exchange(n=2)
    stored = ChatCompletion(texts=("first\nanswer", "second"))
    cache.store(request_fingerprint(exchange), exchange, stored)
    replay = ReplayGateway(cache)
    assert replay.complete(exchange).texts == ("first\nanswer", "second")
    assert replay.complete(exchange).texts == ("first\nanswer", "second")


def test_replay_miss_names_fingerprint(tmp_path):
    replay = ReplayGateway(CacheStore(tmp_path))
    exchange = _exchange("never recorded")
    with pytest.raises(CacheMissError) as excinfo:
        replay.complete(exchange)
    assert request_fingerprint(exchange) in str(excinfo.value)


def test_replay_honors_n_20(tmp_path):
    cache = CacheStore(tmp_path)
    exchange = _exchange(n=20)
    cache.store(
        request_fingerprint(exchange),
        exchange,
        ChatCompletion(texts=tuple(f"sql {i}" for i in range(20))),
    )
    completion = ReplayGateway(cache).complete(exchange)
    assert len(completion.texts) == 20


class _StubTransport:
    def __init__(self, texts=("stub",)):
        self.texts = texts
        self.calls = 0

    def complete(self, exchange):
        self.calls += 1
        return ChatCompletion(texts=tuple(self.texts) * exchange.n)


def test_record_then_replay_round_trip(tmp_path):
    cache = CacheStore(tmp_path)
    transport = _StubTransport(("recorded text",))
    recording = RecordingGateway(transport, cache)
    exchange = _exchange()
    first = recording.complete(exchange)
    assert ReplayGateway(cache).complete(exchange).texts == first.texts


def test_recording_is_cache_first(tmp_path):
    cache = CacheStore(tmp_path)
    transport = _StubTransport()
    recording = RecordingGateway(transport, cache)
    exchange = _exchange()
    recording.complete(exchange)
    recording.complete(exchange)
    assert transport.calls == 1


def test_cache_entry_carries_request_payload(tmp_path):
    cache = CacheStore(tmp_path)
    exchange = _exchange("inspect me")
    RecordingGateway(_StubTransport(), cache).complete(exchange)
    entry = json.loads(cache.path_for(request_fingerprint(exchange)).read_text())
    assert entry["request"]["messages"] == [{"role": "user", "content": "inspect me"}]
    assert entry["request"]["n"] == 1


class _FakeResponse:
    def __init__(self, status_code, payload=None, text=""):
        self.status_code = status_code
        self._payload = payload or {}
        self.text = text

    def json(self):
        return self._payload


class _FakeSession:
    def __init__(self, responses):
        self.responses = list(responses)
        self.bodies = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.bodies.append(json)
        return self.responses.pop(0)


def _live(session, **kwargs):
    kwargs.setdefault("backoff_seconds", 0.0)
    return LiveGateway("https://example.test/v1", "key", session=session, **kwargs)


def _ok_payload(n):
    return {
        "choices": [{"message": {"content": f"text {i}"}} for i in range(n)],
        "usage": {"prompt_tokens": 12, "completion_tokens": 34},
    }


def test_live_success_parses_texts_and_usage():
    session = _FakeSession([_FakeResponse(200, _ok_payload(2))])
    completion = _live(session).complete(_exchange(n=2))
    assert completion.texts == ("text 0", "text 1")
    assert completion.usage.prompt_tokens == 12


def test_live_retries_transient_then_succeeds():
    session = _FakeSession(
        [_FakeResponse(503, text="busy"), _FakeResponse(200, _ok_payload(1))]
    )
    completion = _live(session).complete(_exchange())
    assert completion.texts == ("text 0",)
    assert len(session.bodies) == 2


def test_live_auth_failure_is_fatal():
    session = _FakeSession([_FakeResponse(401, text="bad key")])
    with pytest.raises(AuthenticationError):
        _live(session).complete(_exchange())


def test_live_missing_key_rejected_up_front():
    with pytest.raises(AuthenticationError):
        LiveGateway("https://example.test/v1", "")


def test_live_rate_limit_exhaustion_surfaces_retryable_error():
    session = _FakeSession([_FakeResponse(429, text="slow down")] * 3)
    with pytest.raises(RateLimitExhausted):
        _live(session, max_attempts=3).complete(_exchange())


def test_live_wrong_completion_count_is_error_not_truncation():
    session = _FakeSession([_FakeResponse(200, _ok_payload(1))])
    with pytest.raises(GatewayError, match="n=3"):
        _live(session).complete(_exchange(n=3))


def test_gateway_cannot_mutate_messages():
    exchange = _exchange()
    with pytest.raises(Exception):
        exchange.messages[0].content = "rewritten"  # frozen dataclass


def test_cache_store_threadsafe_writes(tmp_path):
    cache = CacheStore(tmp_path)
    exchange = _exchange(n=1)
    fingerprint = request_fingerprint(exchange)
    completion = ChatCompletion(texts=("t",))

    def write():
        for _ in range(20):
            cache.store(fingerprint, exchange, completion)

    threads = [threading.Thread(target=write) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert cache.load(fingerprint).texts == ("t",)
    assert cache.fingerprints() == [fingerprint]
