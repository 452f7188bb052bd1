"""Completion clients (scripted mock, record/replay cassette, OpenAI-style
HTTP) plus SQL extraction from raw completions."""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import requests

from .errors import CassetteMiss, CredentialMissing, HttpError, ScriptExhausted
from .prompts import Prompt

API_KEY_ENV = "LLM_API_KEY"
DEFAULT_STOP = (";", "-- Question")


@dataclass(frozen=True)
class CompletionParams:
    model: str = "text-davinci-003"
    temperature: float = 0.0
    max_output_tokens: int = 256
    stop: tuple[str, ...] = DEFAULT_STOP

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    def canonical(self) -> str:
        return json.dumps(
            {
                "model": self.model,
                "temperature": self.temperature,
                "max_output_tokens": self.max_output_tokens,
                "stop": list(self.stop),
            },
            sort_keys=True,
        )


@dataclass(frozen=True)
class CompletionResult:
    raw_text: str
    latency: float
    backend: str  # mock | replay | http


def cassette_key(prompt_text: str, params: CompletionParams) -> str:
    h = hashlib.sha256()
    h.update(prompt_text.encode("utf-8"))
    h.update(b"\x00")
    h.update(params.canonical().encode("utf-8"))
    return h.hexdigest()


class MockClient:
    """Returns scripted responses in order; raises once the script runs out."""

    def __init__(self, script: list[str]):
        self._script = list(script)
        self._lock = threading.Lock()
        self._cursor = 0

    def complete(self, prompt: Prompt, params: CompletionParams) -> CompletionResult:
        if not prompt.text:
            raise ValueError("empty prompt")
        with self._lock:
            if self._cursor >= len(self._script):
                raise ScriptExhausted(f"mock script exhausted after {self._cursor} calls")
            text = self._script[self._cursor]
            self._cursor += 1
        return CompletionResult(raw_text=text, latency=0.0, backend="mock")


@dataclass
class Cassette:
    """Append-only JSONL store of (key, prompt hash, response, params)."""

    path: Path
    entries: dict[str, str] = field(default_factory=dict)

    @classmethod
    def open(cls, path: str | Path) -> "Cassette":
        path = Path(path)
        entries = {}
        if path.is_file():
            for line in path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                record = json.loads(line)
                entries[record["key"]] = record["response"]
        return cls(path=path, entries=entries)

    def record(self, prompt_text: str, params: CompletionParams, response: str) -> None:
        key = cassette_key(prompt_text, params)
        self.entries[key] = response
        record = {
            "key": key,
            "prompt_sha256": hashlib.sha256(prompt_text.encode("utf-8")).hexdigest(),
            "response": response,
            "params": json.loads(params.canonical()),
        }
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record) + "\n")

    def lookup(self, prompt_text: str, params: CompletionParams) -> str | None:
        return self.entries.get(cassette_key(prompt_text, params))


class ReplayClient:
    """Serves recorded responses; a miss is an error in strict mode."""

    def __init__(self, cassette: Cassette, strict: bool = True):
        self._cassette = cassette
        self._strict = strict

    def complete(self, prompt: Prompt, params: CompletionParams) -> CompletionResult:
        if not prompt.text:
            raise ValueError("empty prompt")
        response = self._cassette.lookup(prompt.text, params)
        if response is None:
            if self._strict:
                raise CassetteMiss(f"no recording for prompt of {len(prompt.text)} chars")
            response = ""
        return CompletionResult(raw_text=response, latency=0.0, backend="replay")


class HttpClient:
    """OpenAI-compatible completions endpoint with bounded retries.

    When a cassette is supplied, every successful completion is recorded so
    the run can later be replayed offline.
    """

    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        cassette: Cassette | None = None,
        max_retries: int = 3,
        timeout: float = 120.0,
        max_in_flight: int = 4,
        requests_per_minute: int = 60,
        session: requests.Session | None = None,
    ):
        key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        if not key:
            raise CredentialMissing(f"set {API_KEY_ENV} to use the http backend")
        self._base_url = base_url.rstrip("/")
        self._api_key = key
        self._cassette = cassette
        self._max_retries = max_retries
        self._timeout = timeout
        self._session = session or requests.Session()
        self._slots = threading.Semaphore(max_in_flight)
        self._rate_lock = threading.Lock()
        self._min_interval = 60.0 / requests_per_minute if requests_per_minute else 0.0
        self._last_request = 0.0

    def _throttle(self) -> None:
        if not self._min_interval:
            return
        with self._rate_lock:
            wait = self._last_request + self._min_interval - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            self._last_request = time.monotonic()

    def complete(self, prompt: Prompt, params: CompletionParams) -> CompletionResult:
        if not prompt.text:
            raise ValueError("empty prompt")
        payload = {
            "model": params.model,
            "prompt": prompt.text,
            "temperature": params.temperature,
            "max_tokens": params.max_output_tokens,
            "stop": list(params.stop),
        }
        url = self._base_url + "/completions"
        headers = {"Authorization": f"Bearer {self._api_key}"}
        started = time.monotonic()
        last_status = 0
        with self._slots:
            for attempt in range(self._max_retries + 1):
                self._throttle()
                try:
                    resp = self._session.post(
                        url, json=payload, headers=headers, timeout=self._timeout
                    )
                except requests.RequestException as exc:
                    if attempt < self._max_retries:
                        time.sleep(0.5 * 2**attempt)
                        continue
                    raise HttpError(0, str(exc)) from exc
                last_status = resp.status_code
                if resp.status_code in (429, 500, 502, 503, 504) and attempt < self._max_retries:
                    time.sleep(0.5 * 2**attempt)
                    continue
                if resp.status_code >= 400:
                    raise HttpError(resp.status_code, resp.text[:500])
                data = resp.json()
                try:
                    text = data["choices"][0]["text"]
                except (KeyError, IndexError, TypeError) as exc:
                    raise HttpError(resp.status_code, "unexpected response shape") from exc
                if self._cassette is not None:
                    self._cassette.record(prompt.text, params, text)
                return CompletionResult(
                    raw_text=text, latency=time.monotonic() - started, backend="http"
                )
        raise HttpError(last_status, "retries exhausted")


_STATEMENT_RE = re.compile(r"\b(select|with)\b", re.IGNORECASE)


def extract_sql(raw: str) -> str | None:
    """First statement starting with SELECT or WITH, trimmed to the first
    unquoted semicolon; code fences are stripped. None if no statement."""
    body = "\n".join(
        line for line in raw.splitlines() if not line.lstrip().startswith("```")
    )
    match = _STATEMENT_RE.search(body)
    if match is None:
        return None
    statement = body[match.start():]
    out = []
    quote: str | None = None
    for ch in statement:
        if quote:
            if ch == quote:
                quote = None
        elif ch in ("'", '"'):
            quote = ch
        elif ch == ";":
            break
        out.append(ch)
    sql = "".join(out).strip()
    return sql or None
