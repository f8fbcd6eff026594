"""Candidate generation: prompts, output parsing, backends and pool assembly."""

from .clients import (
    ChatCompletionsClient,
    FixtureClient,
    GenerationClient,
    GenerationRequest,
    fixture_client,
    save_fixtures,
)
from .parsing import GeneratorOutput, format_output, parse_output
from .pool import GenerationConfig, RetryPolicy, generate_pool
from .prompts import DemoTurn, PromptTemplate, load_template, render_prompt

__all__ = [
    "ChatCompletionsClient",
    "DemoTurn",
    "FixtureClient",
    "GenerationClient",
    "GenerationConfig",
    "GenerationRequest",
    "GeneratorOutput",
    "PromptTemplate",
    "RetryPolicy",
    "fixture_client",
    "format_output",
    "generate_pool",
    "load_template",
    "parse_output",
    "render_prompt",
    "save_fixtures",
]
