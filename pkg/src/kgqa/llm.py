"""Pluggable language-model backends.

Four modes share one surface: ``remote`` (OpenAI-compatible HTTP),
``record`` (remote or any inner backend + cassette writing), ``replay``
(cassette-only, zero network), and ``mock`` (deterministic string-distance
perplexity plus a canned completion, for tests and dry runs).

Cassettes are JSON Lines, one record per call:
``{key, kind: chat|ppl, request, response}``. The key is a sha256 over the
canonical JSON of {kind, model, request}, so replay only needs the same
configured model id, not the same backend class.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

from .errors import BudgetExceededError, RemoteError, ReplayError

DEFAULT_MAX_PROMPT_CHARS = 64000

ROLE_MAP = {"agent": "assistant", "tool": "user", "user": "user"}


@dataclass
class ChatPrompt:
    """System instructions + exemplar pairs + the live dialogue turns."""

    system: str
    exemplars: list[tuple[str, str]] = field(default_factory=list)
    turns: list[tuple[str, str]] = field(default_factory=list)

    def validate(self):
        prev = None
        for role, _ in self.turns:
            if role not in ROLE_MAP:
                raise ValueError(f"bad role: {role}")
            if role == "agent" and prev == "agent":
                raise ValueError("two consecutive agent turns")
            prev = role

    def to_payload(self) -> dict:
        return {
            "system": self.system,
            "exemplars": [list(pair) for pair in self.exemplars],
            "turns": [list(pair) for pair in self.turns],
        }

    def serialized_length(self) -> int:
        return len(canonical_json(self.to_payload()))

    def messages(self) -> list[dict]:
        """OpenAI-style message list."""
        msgs = [{"role": "system", "content": self.system}]
        for role, text in self.exemplars:
            msgs.append({"role": ROLE_MAP[role], "content": text})
        for role, text in self.turns:
            msgs.append({"role": ROLE_MAP[role], "content": text})
        return msgs


@dataclass(frozen=True)
class Completion:
    text: str
    usage: dict
    backend_id: str


class ChatBackend(Protocol):
    model_id: str
    max_prompt_chars: int

    def complete(self, prompt: ChatPrompt) -> Completion: ...


class PerplexityProvider(Protocol):
    def perplexity(self, context: str, continuation: str) -> float: ...


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def cassette_key(kind: str, model: str, request: dict) -> str:
    payload = canonical_json({"kind": kind, "model": model, "request": request})
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def complete(prompt: ChatPrompt, backend) -> Completion:
    """Budget-checked completion; the budget error fires before any call."""
    prompt.validate()
    limit = getattr(backend, "max_prompt_chars", DEFAULT_MAX_PROMPT_CHARS)
    size = prompt.serialized_length()
    if size > limit:
        raise BudgetExceededError(f"prompt of {size} chars exceeds budget {limit}")
    return backend.complete(prompt)


def perplexity(context: str, continuation: str, backend) -> float:
    if not continuation:
        raise ValueError("continuation must be non-empty")
    return backend.perplexity(context, continuation)


def _levenshtein(a: str, b: str) -> int:
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


class MockBackend:
    """Deterministic stand-in: PPL = exp(normalized edit distance).

    Identical strings give PPL 1.0; fully disjoint strings of equal length
    give e. Completions are a fixed unanswerable Done so batch runs stay
    total (and score 0) without a model.
    """

    def __init__(self, max_prompt_chars: int = DEFAULT_MAX_PROMPT_CHARS):
        self.model_id = "mock"
        self.max_prompt_chars = max_prompt_chars

    def complete(self, prompt: ChatPrompt) -> Completion:
        return Completion("Done: SELECT ?x WHERE { ?x ns:mock.predicate ?y }",
                          usage={}, backend_id=self.model_id)

    def perplexity(self, context: str, continuation: str) -> float:
        longest = max(len(context), len(continuation))
        if longest == 0:
            return 1.0
        return math.exp(_levenshtein(context, continuation) / longest)


class SequenceBackend:
    """Replies from a fixed list, in order; constant perplexity.

    The workhorse for scripted sessions: wrap it in a CassetteRecorder once,
    then replay the cassette with ScriptedBackend.
    """

    def __init__(self, replies: list[str], ppl_value: float = 8.0,
                 model_id: str = "scripted", max_prompt_chars: int = DEFAULT_MAX_PROMPT_CHARS):
        self.replies = list(replies)
        self.ppl_value = ppl_value
        self.model_id = model_id
        self.max_prompt_chars = max_prompt_chars
        self._next = 0

    def complete(self, prompt: ChatPrompt) -> Completion:
        if self._next >= len(self.replies):
            raise RemoteError("scripted reply list exhausted")
        text = self.replies[self._next]
        self._next += 1
        return Completion(text, usage={}, backend_id=self.model_id)

    def perplexity(self, context: str, continuation: str) -> float:
        return self.ppl_value


class RuleBackend:
    """Computes each reply from the prompt via a caller-supplied function."""

    def __init__(self, rule, ppl_value: float = 8.0, model_id: str = "rule",
                 max_prompt_chars: int = DEFAULT_MAX_PROMPT_CHARS):
        self.rule = rule
        self.ppl_value = ppl_value
        self.model_id = model_id
        self.max_prompt_chars = max_prompt_chars

    def complete(self, prompt: ChatPrompt) -> Completion:
        return Completion(self.rule(prompt), usage={}, backend_id=self.model_id)

    def perplexity(self, context: str, continuation: str) -> float:
        return self.ppl_value


class TablePerplexity:
    """Explicit (context, continuation) -> PPL table, with optional default."""

    def __init__(self, table: dict[tuple[str, str], float] | None = None,
                 default: float | None = None):
        self.table = dict(table or {})
        self.default = default

    def perplexity(self, context: str, continuation: str) -> float:
        key = (context, continuation)
        if key in self.table:
            return self.table[key]
        if self.default is not None:
            return self.default
        raise KeyError(f"no PPL table entry for {key!r}")


def load_cassette(path: str | Path) -> dict[str, dict]:
    entries: dict[str, dict] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                record = json.loads(line)
                entries[record["key"]] = record
    return entries


class ScriptedBackend:
    """Replay-only backend: every call must hit a cassette entry."""

    def __init__(self, cassette_path: str | Path, model_id: str = "scripted",
                 max_prompt_chars: int = DEFAULT_MAX_PROMPT_CHARS):
        self.model_id = model_id
        self.max_prompt_chars = max_prompt_chars
        self._entries = load_cassette(cassette_path)

    def complete(self, prompt: ChatPrompt) -> Completion:
        key = cassette_key("chat", self.model_id, prompt.to_payload())
        entry = self._entries.get(key)
        if entry is None:
            raise ReplayError(key)
        return Completion(entry["response"]["text"], usage=entry["response"].get("usage", {}),
                          backend_id=self.model_id)

    def perplexity(self, context: str, continuation: str) -> float:
        key = cassette_key("ppl", self.model_id, {"context": context, "continuation": continuation})
        entry = self._entries.get(key)
        if entry is None:
            raise ReplayError(key)
        return float(entry["response"]["value"])


class CassetteRecorder:
    """Wraps any backend and appends every call to a cassette file."""

    def __init__(self, inner, cassette_path: str | Path):
        self.inner = inner
        self.model_id = inner.model_id
        self.max_prompt_chars = getattr(inner, "max_prompt_chars", DEFAULT_MAX_PROMPT_CHARS)
        self.cassette_path = Path(cassette_path)

    def _write(self, record: dict):
        with open(self.cassette_path, "a", encoding="utf-8") as fh:
            fh.write(canonical_json(record) + "\n")

    def complete(self, prompt: ChatPrompt) -> Completion:
        request = prompt.to_payload()
        completion = self.inner.complete(prompt)
        self._write({
            "key": cassette_key("chat", self.model_id, request),
            "kind": "chat",
            "request": request,
            "response": {"text": completion.text, "usage": completion.usage},
        })
        return completion

    def perplexity(self, context: str, continuation: str) -> float:
        request = {"context": context, "continuation": continuation}
        value = self.inner.perplexity(context, continuation)
        self._write({
            "key": cassette_key("ppl", self.model_id, request),
            "kind": "ppl",
            "request": request,
            "response": {"value": value},
        })
        return value


class RemoteBackend:
    """OpenAI-compatible chat completions + logprob-echo perplexity.

    Transient failures (connection errors, 5xx) retry up to 3 times with
    exponential backoff; 4xx responses raise immediately. Temperature is
    pinned to 0 so interaction traces are reproducible.
    """

    def __init__(self, base_url: str, model: str, api_key: str = "",
                 ppl_model: str | None = None, timeout: float = 60.0,
                 max_retries: int = 3, session=None,
                 max_prompt_chars: int = DEFAULT_MAX_PROMPT_CHARS):
        import requests

        self.base_url = base_url.rstrip("/")
        self.model_id = model
        self.ppl_model = ppl_model or model
        self.api_key = api_key
        self.timeout = timeout
        self.max_retries = max_retries
        self.max_prompt_chars = max_prompt_chars
        self._session = session or requests.Session()

    def _post(self, path: str, payload: dict) -> dict:
        import requests

        url = f"{self.base_url}{path}"
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            try:
                response = self._session.post(url, json=payload, headers=headers,
                                              timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = exc
                time.sleep(0.5 * (2 ** attempt))
                continue
            if response.status_code >= 500:
                last_error = RemoteError(f"server error {response.status_code}",
                                         status=response.status_code)
                time.sleep(0.5 * (2 ** attempt))
                continue
            if response.status_code >= 400:
                raise RemoteError(f"request failed with {response.status_code}: "
                                  f"{response.text[:200]}", status=response.status_code)
            return response.json()
        raise RemoteError(f"exhausted {self.max_retries} retries: {last_error}")

    def complete(self, prompt: ChatPrompt) -> Completion:
        data = self._post("/chat/completions", {
            "model": self.model_id,
            "messages": prompt.messages(),
            "temperature": 0,
        })
        text = data["choices"][0]["message"]["content"]
        if not text:
            raise RemoteError("empty completion text")
        return Completion(text, usage=data.get("usage", {}), backend_id=self.model_id)

    def perplexity(self, context: str, continuation: str) -> float:
        data = self._post("/completions", {
            "model": self.ppl_model,
            "prompt": context + continuation,
            "max_tokens": 0,
            "echo": True,
            "logprobs": 0,
        })
        logprobs = data["choices"][0]["logprobs"]
        token_logprobs = logprobs["token_logprobs"]
        offsets = logprobs["text_offset"]
        tail = [lp for lp, off in zip(token_logprobs, offsets)
                if off >= len(context) and lp is not None]
        if not tail:
            raise RemoteError("no continuation tokens in logprob echo")
        return math.exp(-sum(tail) / len(tail))


@dataclass
class LlmConfig:
    """Backend settings, resolvable from environment variables."""

    mode: str = "mock"  # remote | record | replay | mock
    base_url: str = ""
    model: str = "mock"
    api_key: str = ""
    ppl_model: str = ""
    cassette: str = ""
    max_prompt_chars: int = DEFAULT_MAX_PROMPT_CHARS

    @classmethod
    def from_env(cls, base: "LlmConfig | None" = None, env=os.environ) -> "LlmConfig":
        cfg = base or cls()
        return cls(
            mode=env.get("LLM_MODE", cfg.mode),
            base_url=env.get("LLM_BASE_URL", cfg.base_url),
            model=env.get("LLM_MODEL", cfg.model),
            api_key=env.get("LLM_API_KEY", cfg.api_key),
            ppl_model=env.get("PPL_MODEL", cfg.ppl_model),
            cassette=env.get("LLM_CASSETTE", cfg.cassette),
            max_prompt_chars=cfg.max_prompt_chars,
        )


def make_backend(config: LlmConfig):
    """Build the backend for a config; record mode wraps the remote backend."""
    if config.mode == "mock":
        return MockBackend(max_prompt_chars=config.max_prompt_chars)
    if config.mode == "replay":
        if not config.cassette:
            raise ValueError("replay mode requires a cassette path")
        return ScriptedBackend(config.cassette, model_id=config.model,
                               max_prompt_chars=config.max_prompt_chars)
    if config.mode in ("remote", "record"):
        remote = RemoteBackend(config.base_url, config.model, api_key=config.api_key,
                               ppl_model=config.ppl_model or config.model,
                               max_prompt_chars=config.max_prompt_chars)
        if config.mode == "record":
            if not config.cassette:
                raise ValueError("record mode requires a cassette path")
            return CassetteRecorder(remote, config.cassette)
        return remote
    raise ValueError(f"unknown LLM mode: {config.mode}")
