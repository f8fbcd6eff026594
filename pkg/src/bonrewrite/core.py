"""Conversation, candidate and label types shared by every stage.

Everything here is immutable once built. JSONL helpers live at the bottom
and implement the on-disk session / candidate layouts.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping

from .errors import InvalidCandidateError, SchemaError

REWRITE_MAX_TOKENS = 32
STANDALONE_MAX_TOKENS = 256

_ALNUM = re.compile(r"[^\W_]+")

SessionRef = tuple[str, int]


def analyze(text: str) -> list[str]:
    """Lowercase and split on anything that is not a letter or digit."""
    return _ALNUM.findall(text.lower())


def concat_standalone(rewrite: str, pseudo_response: str) -> str:
    if not rewrite:
        raise InvalidCandidateError("rewrite must be non-empty")
    if not pseudo_response:
        return rewrite
    return f"{rewrite} {pseudo_response}"


def truncate_query(text: str, max_tokens: int) -> str:
    """Keep the first ``max_tokens`` whitespace tokens.

    Inputs already within the limit are returned untouched (original
    spacing kept); longer ones are rejoined with single spaces.
    """
    if max_tokens < 1:
        raise ValueError(f"max_tokens must be >= 1, got {max_tokens}")
    tokens = text.split()
    if len(tokens) <= max_tokens:
        return text
    return " ".join(tokens[:max_tokens])


def query_id(session_id: str, turn_index: int) -> str:
    """Qrels/run identifier for a session turn."""
    return f"{session_id}_{turn_index}"


@dataclass(frozen=True)
class Turn:
    query: str
    response: str = ""

    def __post_init__(self) -> None:
        if not self.query.strip():
            raise SchemaError("turn query must be non-empty")


@dataclass(frozen=True)
class ConversationSession:
    session_id: str
    turn_index: int
    history: tuple[Turn, ...]
    current_query: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "history", tuple(self.history))
        if self.turn_index < 1:
            raise SchemaError(f"turn_index must be >= 1, got {self.turn_index}")
        if len(self.history) != self.turn_index - 1:
            raise SchemaError(
                f"session {self.session_id!r}: history has {len(self.history)} turns "
                f"but turn_index is {self.turn_index}"
            )

    @property
    def ref(self) -> SessionRef:
        return (self.session_id, self.turn_index)

    @property
    def qid(self) -> str:
        return query_id(self.session_id, self.turn_index)

    def to_dict(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "turn_index": self.turn_index,
            "history": [{"query": t.query, "response": t.response} for t in self.history],
            "current_query": self.current_query,
        }

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "ConversationSession":
        history = [
            Turn(query=_field(t, "query", str), response=t.get("response", "") or "")
            for t in _field(obj, "history", list)
        ]
        return cls(
            session_id=str(_field(obj, "session_id", (str, int))),
            turn_index=_field(obj, "turn_index", int),
            history=tuple(history),
            current_query=_field(obj, "current_query", str),
        )


@dataclass(frozen=True)
class ReformulationCandidate:
    """A rewrite plus pseudo-response; ``standalone_query`` is derived.

    The standalone query is the space-joined pair, capped at 256 tokens
    (32 when there is no pseudo-response).
    """

    rewrite: str
    pseudo_response: str
    candidate_index: int
    generation_seed: int = 0
    standalone_query: str = field(init=False, compare=False)

    def __post_init__(self) -> None:
        if not self.rewrite.strip():
            raise InvalidCandidateError(
                f"candidate {self.candidate_index}: rewrite must be non-empty"
            )
        cap = STANDALONE_MAX_TOKENS if self.pseudo_response else REWRITE_MAX_TOKENS
        joined = concat_standalone(self.rewrite, self.pseudo_response)
        object.__setattr__(self, "standalone_query", truncate_query(joined, cap))

    def to_dict(self) -> dict[str, Any]:
        return {
            "rewrite": self.rewrite,
            "pseudo_response": self.pseudo_response,
            "candidate_index": self.candidate_index,
            "generation_seed": self.generation_seed,
        }

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "ReformulationCandidate":
        return cls(
            rewrite=_field(obj, "rewrite", str),
            pseudo_response=obj.get("pseudo_response", "") or "",
            candidate_index=_field(obj, "candidate_index", int),
            generation_seed=int(obj.get("generation_seed", 0)),
        )


@dataclass(frozen=True)
class DroppedOutput:
    """A generation request whose output never made it into the pool."""

    request_index: int
    reason: str
    raw_text: str = ""


@dataclass(frozen=True)
class CandidatePool:
    session_id: str
    turn_index: int
    candidates: tuple[ReformulationCandidate, ...]
    dropped: tuple[DroppedOutput, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "candidates", tuple(self.candidates))
        object.__setattr__(self, "dropped", tuple(self.dropped))
        if not self.candidates:
            raise SchemaError(f"pool {self.ref}: needs at least one candidate")
        indices = [c.candidate_index for c in self.candidates]
        if indices != list(range(len(indices))):
            raise SchemaError(
                f"pool {self.ref}: candidate_index values must be 0..{len(indices) - 1} "
                f"in order, got {indices}"
            )

    def __len__(self) -> int:
        return len(self.candidates)

    @property
    def ref(self) -> SessionRef:
        return (self.session_id, self.turn_index)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "session_id": self.session_id,
            "turn_index": self.turn_index,
            "candidates": [c.to_dict() for c in self.candidates],
        }
        if self.dropped:
            out["dropped"] = [
                {"request_index": d.request_index, "reason": d.reason, "raw_text": d.raw_text}
                for d in self.dropped
            ]
        return out

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "CandidatePool":
        return cls(
            session_id=str(_field(obj, "session_id", (str, int))),
            turn_index=_field(obj, "turn_index", int),
            candidates=tuple(
                ReformulationCandidate.from_dict(c) for c in _field(obj, "candidates", list)
            ),
            dropped=tuple(
                DroppedOutput(int(d["request_index"]), str(d["reason"]), d.get("raw_text", ""))
                for d in obj.get("dropped", [])
            ),
        )


@dataclass(frozen=True)
class GoldLabel:
    session_id: str
    turn_index: int
    gold_passage_ids: frozenset[str]
    graded_relevance: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "gold_passage_ids", frozenset(self.gold_passage_ids))
        if not self.gold_passage_ids:
            raise SchemaError(f"gold label {self.ref}: no gold passages")
        for pid, grade in self.graded_relevance.items():
            if grade < 0:
                raise SchemaError(f"gold label {self.ref}: negative grade for {pid!r}")
            if grade > 0 and pid not in self.gold_passage_ids:
                raise SchemaError(f"gold label {self.ref}: {pid!r} graded but not gold")

    @property
    def ref(self) -> SessionRef:
        return (self.session_id, self.turn_index)


# --------------------------------------------------------------------------
# JSONL plumbing


def _field(obj: Mapping[str, Any], name: str, kind: type | tuple[type, ...]) -> Any:
    if not isinstance(obj, Mapping):
        raise SchemaError(f"expected a JSON object, got {type(obj).__name__}")
    if name not in obj:
        raise SchemaError(f"missing field {name!r}")
    value = obj[name]
    if isinstance(value, bool) or not isinstance(value, kind):
        raise SchemaError(f"field {name!r} has wrong type {type(value).__name__}")
    return value


def read_jsonl(path: str | Path) -> Iterator[dict[str, Any]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc


def dumps_line(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=False)


def write_jsonl(path: str | Path, records: Iterable[Any]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(dumps_line(rec))
            fh.write("\n")


def _load_records(path: str | Path, parse) -> list:
    out = []
    for lineno, obj in enumerate(read_jsonl(path), 1):
        try:
            out.append(parse(obj))
        except SchemaError as exc:
            raise SchemaError(f"{path}: record {lineno}: {exc}") from exc
    return out


def load_sessions(path: str | Path) -> list[ConversationSession]:
    sessions = _load_records(path, ConversationSession.from_dict)
    seen: set[SessionRef] = set()
    for s in sessions:
        if s.ref in seen:
            raise SchemaError(f"{path}: duplicate session {s.ref}")
        seen.add(s.ref)
    return sessions


def save_sessions(path: str | Path, sessions: Iterable[ConversationSession]) -> None:
    write_jsonl(path, (s.to_dict() for s in sessions))


def load_pools(path: str | Path) -> list[CandidatePool]:
    return _load_records(path, CandidatePool.from_dict)


def save_pools(path: str | Path, pools: Iterable[CandidatePool]) -> None:
    write_jsonl(path, (p.to_dict() for p in pools))
