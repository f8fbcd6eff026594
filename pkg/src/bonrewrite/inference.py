"""Test-time selection over a candidate pool under a budget N.

The budgeted sub-pool is always the first N candidates in generation order.
Ties are resolved towards the lowest candidate index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .assessment import AssessmentRecord, PoolAssessment
from .core import CandidatePool, ConversationSession, _field, read_jsonl, write_jsonl
from .errors import BudgetError, StrategyError
from .retrieval import QueryEmbedder
from .reward.encoder import encode_matrix
from .reward.model import RewardModel


@dataclass(frozen=True)
class RewardArgmax:
    model: RewardModel | None
    name = "reward"


@dataclass(frozen=True)
class Oracle:
    """Picks the highest fusion score; needs the pool's assessment records."""

    records: Sequence[AssessmentRecord] | PoolAssessment | None
    name = "oracle"


class RandomChoice:
    """Uniform pick; successive calls advance one seeded generator."""

    name = "random"

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._rng = np.random.default_rng(seed)

    def draw(self, n: int) -> int:
        return int(self._rng.integers(n))


@dataclass(frozen=True)
class MeanAggregation:
    embedder: QueryEmbedder | None
    name = "mean"


@dataclass(frozen=True)
class First:
    name = "first"


SelectionStrategy = RewardArgmax | Oracle | RandomChoice | MeanAggregation | First


@dataclass(frozen=True)
class SelectionResult:
    session_id: str
    turn_index: int
    strategy: str
    budget: int
    chosen_index: int | None
    scores: tuple[float, ...] = ()
    query_vector: np.ndarray | None = field(default=None, compare=False, repr=False)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "session_id": self.session_id,
            "turn_index": self.turn_index,
            "strategy": self.strategy,
            "budget": self.budget,
            "chosen_index": self.chosen_index,
            "scores": list(self.scores),
        }
        if self.query_vector is not None:
            out["query_vector"] = [float(v) for v in self.query_vector]
        return out

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "SelectionResult":
        vec = obj.get("query_vector")
        chosen = obj.get("chosen_index")
        return cls(
            session_id=str(_field(obj, "session_id", (str, int))),
            turn_index=_field(obj, "turn_index", int),
            strategy=_field(obj, "strategy", str),
            budget=_field(obj, "budget", int),
            chosen_index=None if chosen is None else int(chosen),
            scores=tuple(float(s) for s in obj.get("scores", [])),
            query_vector=None if vec is None else np.asarray(vec, dtype=np.float64),
        )


def _argmax_lowest(values: Sequence[float]) -> int:
    best = 0
    for i, v in enumerate(values):
        if v > values[best]:
            best = i
    return best


def select(
    pool: CandidatePool,
    session: ConversationSession,
    strategy: SelectionStrategy,
    budget: int,
) -> SelectionResult:
    if not 1 <= budget <= len(pool):
        raise BudgetError(f"budget {budget} outside 1..{len(pool)} for pool {pool.ref}")
    if session.ref != pool.ref:
        raise StrategyError(f"session {session.ref} does not match pool {pool.ref}")
    sub = pool.candidates[:budget]

    def result(chosen: int | None, scores: Iterable[float] = (), vector=None) -> SelectionResult:
        return SelectionResult(pool.session_id, pool.turn_index, strategy.name, budget,
                               chosen, tuple(float(s) for s in scores), vector)

    if isinstance(strategy, RewardArgmax):
        if strategy.model is None:
            raise StrategyError("reward strategy needs a trained model")
        X = encode_matrix(sub, session, strategy.model.encoder_config)
        scores = [float(s) for s in strategy.model.score_matrix(X)]
        return result(_argmax_lowest(scores), scores)
    if isinstance(strategy, Oracle):
        records = strategy.records
        if isinstance(records, PoolAssessment):
            if records.ref != pool.ref:
                raise StrategyError(f"assessment {records.ref} does not match pool {pool.ref}")
            records = records.records
        if not records:
            raise StrategyError("oracle strategy needs assessment records")
        by_index = {r.candidate_index: r.fusion_score for r in records}
        try:
            scores = [by_index[i] for i in range(budget)]
        except KeyError as exc:
            raise StrategyError(f"no assessment for candidate {exc.args[0]} of {pool.ref}") from None
        return result(_argmax_lowest(scores), scores)
    if isinstance(strategy, RandomChoice):
        return result(strategy.draw(budget))
    if isinstance(strategy, First):
        return result(0)
    if isinstance(strategy, MeanAggregation):
        if strategy.embedder is None:
            raise StrategyError("mean aggregation needs a query embedder")
        vectors = np.array([strategy.embedder.embed(c.standalone_query) for c in sub])
        return result(None, vector=vectors.mean(axis=0))
    raise StrategyError(f"unknown strategy {strategy!r}")


def sweep_budget(
    pool: CandidatePool,
    session: ConversationSession,
    strategy: SelectionStrategy,
    budgets: Sequence[int],
) -> list[SelectionResult]:
    if list(budgets) != sorted(budgets):
        raise BudgetError(f"budgets must be ascending, got {list(budgets)}")
    return [select(pool, session, strategy, n) for n in budgets]


def load_selections(path: str | Path) -> list[SelectionResult]:
    return [SelectionResult.from_dict(obj) for obj in read_jsonl(path)]


def save_selections(path: str | Path, results: Iterable[SelectionResult]) -> None:
    write_jsonl(path, (r.to_dict() for r in results))
