"""Sampling N candidates per session turn."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Mapping

from ..core import CandidatePool, ConversationSession, DroppedOutput, ReformulationCandidate
from ..errors import ConfigError, GenerationError, TransportError
from .clients import GenerationClient, GenerationRequest
from .parsing import parse_output
from .prompts import PromptTemplate, render_prompt

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff_seconds: float = 1.0  # doubled after every transport failure

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be >= 1")
        if self.backoff_seconds < 0:
            raise ConfigError("backoff_seconds must be >= 0")


@dataclass(frozen=True)
class GenerationConfig:
    n: int = 16
    temperature: float = 0.7
    max_output_tokens: int = 512
    request_seed_base: int = 0
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    concurrency: int = 4

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        if not 0.0 <= self.temperature <= 2.0:
            raise ConfigError(f"temperature must lie in [0, 2], got {self.temperature}")
        if self.max_output_tokens < 1:
            raise ConfigError("max_output_tokens must be >= 1")
        if self.concurrency < 1:
            raise ConfigError("concurrency must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "GenerationConfig":
        obj = dict(obj)
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown generation settings {sorted(unknown)}")
        if "retry" in obj:
            obj["retry"] = RetryPolicy(**obj["retry"])
        return cls(**obj)


def _run_request(
    client: GenerationClient,
    request: GenerationRequest,
    retry: RetryPolicy,
    sleep: Callable[[float], None],
) -> tuple[tuple[str, str] | None, DroppedOutput | None]:
    last_raw, reason = "", ""
    delay = retry.backoff_seconds
    for attempt in range(1, retry.max_attempts + 1):
        try:
            raw = client.complete(request)
        except TransportError as exc:
            reason = f"transport: {exc}"
            log.warning("request %d for %s/%d failed (attempt %d): %s", request.request_index,
                        request.session_id, request.turn_index, attempt, exc)
            if attempt < retry.max_attempts:
                sleep(delay)
                delay *= 2
            continue
        out = parse_output(raw)
        if out.ok:
            return (out.rewrite, out.pseudo_response), None
        last_raw, reason = raw, f"unparseable: {out.error}"
    log.warning("dropping request %d for %s/%d: %s", request.request_index,
                request.session_id, request.turn_index, reason)
    return None, DroppedOutput(request.request_index, reason, last_raw)


def generate_pool(
    client: GenerationClient,
    template: PromptTemplate,
    session: ConversationSession,
    config: GenerationConfig | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> CandidatePool:
    """Request ``config.n`` completions and keep the parseable ones.

    Requests may run concurrently; candidates are always assembled in
    request order, then renumbered 0..k-1 if any were dropped.
    """
    config = config or GenerationConfig()
    prompt = render_prompt(template, session)
    requests = [
        GenerationRequest(
            prompt=prompt,
            session_id=session.session_id,
            turn_index=session.turn_index,
            request_index=i,
            seed=config.request_seed_base + i,
            temperature=config.temperature,
            max_output_tokens=config.max_output_tokens,
        )
        for i in range(config.n)
    ]

    def run(req: GenerationRequest):
        return _run_request(client, req, config.retry, sleep)

    if config.concurrency > 1 and config.n > 1:
        with ThreadPoolExecutor(max_workers=config.concurrency) as ex:
            results = list(ex.map(run, requests))
    else:
        results = [run(r) for r in requests]

    candidates, dropped = [], []
    for req, (parsed, drop) in zip(requests, results):
        if parsed is None:
            dropped.append(drop)
            continue
        rewrite, response = parsed
        candidates.append(
            ReformulationCandidate(rewrite, response, len(candidates), generation_seed=req.seed)
        )
    if not candidates:
        reasons = "; ".join(sorted({d.reason for d in dropped}))
        raise GenerationError(f"session {session.ref}: all {config.n} requests failed ({reasons})")
    return CandidatePool(session.session_id, session.turn_index, tuple(candidates), tuple(dropped))
