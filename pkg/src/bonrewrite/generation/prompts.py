"""Prompt assembly for rewrite-and-response generation.

Rendered layout: instruction, demonstrations, the session context (earlier
turns), the current question, and the output-format closing instruction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

from ..core import ConversationSession
from ..errors import PromptError

REWRITE_MARKER = "So the question should be rewritten as:"


@dataclass(frozen=True)
class DemoTurn:
    question: str
    reason: str
    rewrite: str
    response: str


@dataclass(frozen=True)
class PromptTemplate:
    instruction: str
    demonstrations: tuple[tuple[DemoTurn, ...], ...]
    closing: str

    def __post_init__(self) -> None:
        if not self.instruction.strip():
            raise PromptError("template instruction is empty")
        object.__setattr__(
            self, "demonstrations", tuple(tuple(d) for d in self.demonstrations)
        )

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "PromptTemplate":
        try:
            demos = tuple(
                tuple(DemoTurn(**turn) for turn in demo) for demo in obj.get("demonstrations", [])
            )
            return cls(str(obj["instruction"]), demos, str(obj.get("closing", "")))
        except (KeyError, TypeError) as exc:
            raise PromptError(f"malformed prompt template: {exc}") from exc


def load_template(path: str | Path | None = None) -> PromptTemplate:
    """Load a template JSON file, or the packaged default when ``path`` is None."""
    if path is None:
        text = resources.files(__package__).joinpath("data/default_prompt.json").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    try:
        return PromptTemplate.from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise PromptError(f"template {path}: invalid JSON ({exc.msg})") from exc


def _demo_block(number: int, turns: Sequence[DemoTurn]) -> str:
    lines = [f"Example #{number}:"]
    for t in turns:
        lines.append(f"Question: {t.question}")
        lines.append(f"Rewrite: {t.reason} {REWRITE_MARKER} {t.rewrite}")
        lines.append(f"Response: {t.response}")
        lines.append("")
    return "\n".join(lines).rstrip("\n")


def render_prompt(template: PromptTemplate, session: ConversationSession) -> str:
    if not session.current_query.strip():
        raise PromptError(f"session {session.ref} has no current question")
    parts = [template.instruction]
    parts.extend(_demo_block(i, demo) for i, demo in enumerate(template.demonstrations, 1))
    context = []
    for turn in session.history:
        context.append(f"Question: {turn.query}")
        context.append(f"Response: {turn.response}")
    parts.append("Context:\n" + "\n".join(context))
    parts.append(f"Current Question: {session.current_query}")
    if template.closing:
        parts.append(template.closing)
    return "\n\n".join(parts) + "\n"
