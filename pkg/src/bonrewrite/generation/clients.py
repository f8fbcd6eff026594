"""Generation backends: fixture replay and a chat-completions HTTP client."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Protocol

import httpx

from ..core import read_jsonl, write_jsonl
from ..errors import ConfigError, FixtureMissError, GenerationError, SchemaError, TransportError


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    session_id: str
    turn_index: int
    request_index: int
    seed: int
    temperature: float = 0.7
    max_output_tokens: int = 512


class GenerationClient(Protocol):
    def complete(self, request: GenerationRequest) -> str: ...


FixtureKey = tuple[str, int, int]


class FixtureClient:
    """Replays stored raw outputs keyed by (session_id, turn_index, request_index)."""

    def __init__(self, outputs: Mapping[FixtureKey, str]):
        self.outputs = dict(outputs)

    @classmethod
    def from_records(cls, records: Iterable[Mapping]) -> "FixtureClient":
        outputs: dict[FixtureKey, str] = {}
        for n, rec in enumerate(records, 1):
            try:
                key = (str(rec["session_id"]), int(rec["turn_index"]), int(rec["request_index"]))
                text = rec["raw_text"]
            except (KeyError, TypeError, ValueError) as exc:
                raise SchemaError(f"fixture record {n}: {exc}") from exc
            if not isinstance(text, str):
                raise SchemaError(f"fixture record {n}: 'raw_text' must be a string")
            if key in outputs:
                raise SchemaError(f"fixture record {n}: duplicate key {key}")
            outputs[key] = text
        return cls(outputs)

    def complete(self, request: GenerationRequest) -> str:
        key = (request.session_id, request.turn_index, request.request_index)
        try:
            return self.outputs[key]
        except KeyError:
            raise FixtureMissError(
                f"no fixture for session_id={key[0]!r} turn_index={key[1]} request_index={key[2]}"
            ) from None


def fixture_client(path: str | Path) -> FixtureClient:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"fixture file not found: {path}")
    return FixtureClient.from_records(read_jsonl(path))


def save_fixtures(path: str | Path, outputs: Mapping[FixtureKey, str]) -> None:
    write_jsonl(
        path,
        (
            {"session_id": s, "turn_index": t, "request_index": i, "raw_text": text}
            for (s, t, i), text in sorted(outputs.items())
        ),
    )


class ChatCompletionsClient:
    """Client for an OpenAI-style ``/chat/completions`` endpoint.

    429 and 5xx responses, timeouts and connection errors raise
    :class:`TransportError` (retried by the caller); other 4xx errors are
    fatal.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
    ):
        url = endpoint.rstrip("/")
        if not url.endswith("/chat/completions"):
            url += "/chat/completions"
        self.url = url
        self.model = model
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._http = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    @classmethod
    def from_env(cls, **overrides) -> "ChatCompletionsClient":
        endpoint = overrides.pop("endpoint", None) or os.environ.get("GENERATION_ENDPOINT")
        model = overrides.pop("model", None) or os.environ.get("GENERATION_MODEL")
        if not endpoint or not model:
            raise ConfigError("set GENERATION_ENDPOINT and GENERATION_MODEL (or pass fixtures)")
        api_key = overrides.pop("api_key", None) or os.environ.get("GENERATION_API_KEY")
        return cls(endpoint, model, api_key=api_key, **overrides)

    def complete(self, request: GenerationRequest) -> str:
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "seed": request.seed,
            "max_tokens": request.max_output_tokens,
        }
        try:
            resp = self._http.post(self.url, json=body)
        except httpx.HTTPError as exc:
            raise TransportError(f"request to {self.url} failed: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransportError(f"{self.url} returned HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise GenerationError(f"{self.url} returned HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion payload: {exc}") from exc

    def close(self) -> None:
        self._http.close()
