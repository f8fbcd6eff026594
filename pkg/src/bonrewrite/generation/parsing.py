"""Extract rewrite and pseudo-response from raw generator text."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .prompts import REWRITE_MARKER

_LAYOUT = re.compile(r"rewritten\s+as:(?P<rewrite>.*?)response:(?P<response>.*)", re.I | re.S)


@dataclass(frozen=True)
class GeneratorOutput:
    raw_text: str
    rewrite: str | None = None
    pseudo_response: str = ""
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def parse_output(raw: str) -> GeneratorOutput:
    m = _LAYOUT.search(raw)
    if m is None:
        return GeneratorOutput(raw, error="missing 'rewritten as:' / 'Response:' markers")
    rewrite = m.group("rewrite").strip()
    if not rewrite:
        return GeneratorOutput(raw, error="empty rewrite")
    return GeneratorOutput(raw, rewrite=rewrite, pseudo_response=m.group("response").strip())


def format_output(rewrite: str, response: str, reason: str = "This is the first turn.") -> str:
    """Inverse of :func:`parse_output`, used for fixtures and tests."""
    return f"Rewrite: {reason} {REWRITE_MARKER} {rewrite}\nResponse: {response}"
