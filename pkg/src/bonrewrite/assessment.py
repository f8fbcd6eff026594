"""Outcome labels for candidate pools.

Each candidate's standalone query is run through both retrievers; the
reciprocal ranks of the gold passage are summed into a fusion score and the
pool is ranked by it. Those ranks are the training signal for the reward
model.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .core import CandidatePool, GoldLabel, SessionRef, _field, read_jsonl, write_jsonl
from .errors import AssessmentError, InvalidRankError, SchemaError
from .retrieval import (
    DEFAULT_DEPTH,
    DenseIndex,
    QueryEmbedder,
    SparseIndex,
    gold_rank,
    search_dense,
    search_sparse,
)


def _reciprocal(rank: int | None) -> float:
    if rank is None:
        return 0.0
    if isinstance(rank, bool) or not isinstance(rank, int) or rank < 1:
        raise InvalidRankError(f"rank must be a positive integer or NOT_FOUND, got {rank!r}")
    return 1.0 / rank


def fusion_score(sparse_rank: int | None, dense_rank: int | None) -> float:
    """``1/sparse_rank + 1/dense_rank``; an unretrieved gold passage adds 0."""
    return _reciprocal(sparse_rank) + _reciprocal(dense_rank)


def assign_ranks(scores: Sequence[float]) -> list[int]:
    """1-based ranks by descending score, ties to the lower position."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    ranks = [0] * len(scores)
    for pos, i in enumerate(order, 1):
        ranks[i] = pos
    return ranks


@dataclass(frozen=True)
class AssessmentRecord:
    candidate_index: int
    sparse_rank: int | None
    dense_rank: int | None
    fusion_score: float
    assigned_rank: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "candidate_index": self.candidate_index,
            "sparse_rank": self.sparse_rank,
            "dense_rank": self.dense_rank,
            "fusion_score": self.fusion_score,
            "assigned_rank": self.assigned_rank,
        }

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "AssessmentRecord":
        def rank(name: str) -> int | None:
            v = obj.get(name)
            return None if v is None else int(v)

        return cls(
            candidate_index=_field(obj, "candidate_index", int),
            sparse_rank=rank("sparse_rank"),
            dense_rank=rank("dense_rank"),
            fusion_score=float(_field(obj, "fusion_score", (int, float))),
            assigned_rank=_field(obj, "assigned_rank", int),
        )


@dataclass(frozen=True)
class PoolAssessment:
    session_id: str
    turn_index: int
    records: tuple[AssessmentRecord, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        if sorted(r.assigned_rank for r in self.records) != list(range(1, len(self.records) + 1)):
            raise SchemaError(f"assessment {self.ref}: assigned ranks are not a permutation")

    @property
    def ref(self) -> SessionRef:
        return (self.session_id, self.turn_index)

    def rank_order(self) -> list[int]:
        """Candidate indices sorted by assigned rank (best first)."""
        return [r.candidate_index for r in sorted(self.records, key=lambda r: r.assigned_rank)]

    def to_dict(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "turn_index": self.turn_index,
            "records": [r.to_dict() for r in self.records],
        }

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "PoolAssessment":
        return cls(
            session_id=str(_field(obj, "session_id", (str, int))),
            turn_index=_field(obj, "turn_index", int),
            records=tuple(AssessmentRecord.from_dict(r) for r in _field(obj, "records", list)),
        )


def assess_pool(
    pool: CandidatePool,
    sparse: SparseIndex,
    dense: DenseIndex,
    embedder: QueryEmbedder,
    gold: GoldLabel | None,
    depth: int = DEFAULT_DEPTH,
    workers: int = 1,
) -> list[AssessmentRecord]:
    if gold is None:
        raise AssessmentError(f"no gold label for pool {pool.ref}")
    if gold.ref != pool.ref:
        raise AssessmentError(f"gold label {gold.ref} does not match pool {pool.ref}")

    def ranks_for(candidate) -> tuple[int | None, int | None]:
        query = candidate.standalone_query
        r_s = gold_rank(search_sparse(sparse, query, depth), gold)
        try:
            vec = embedder.embed(query)
        except Exception as exc:
            raise AssessmentError(
                f"pool {pool.ref}: embedding candidate {candidate.candidate_index} failed: {exc}"
            ) from exc
        r_d = gold_rank(search_dense(dense, vec, depth), gold)
        return r_s, r_d

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            ranks = list(ex.map(ranks_for, pool.candidates))
    else:
        ranks = [ranks_for(c) for c in pool.candidates]

    scores = [fusion_score(r_s, r_d) for r_s, r_d in ranks]
    assigned = assign_ranks(scores)
    return [
        AssessmentRecord(c.candidate_index, r_s, r_d, m, j)
        for c, (r_s, r_d), m, j in zip(pool.candidates, ranks, scores, assigned)
    ]


def oracle_best(records: Sequence[AssessmentRecord]) -> int:
    if not records:
        raise AssessmentError("oracle_best needs at least one record")
    return min(records, key=lambda r: r.assigned_rank).candidate_index


def load_assessments(path: str | Path) -> list[PoolAssessment]:
    out = []
    for lineno, obj in enumerate(read_jsonl(path), 1):
        try:
            out.append(PoolAssessment.from_dict(obj))
        except SchemaError as exc:
            raise SchemaError(f"{path}: record {lineno}: {exc}") from exc
    return out


def save_assessments(path: str | Path, assessments: Iterable[PoolAssessment]) -> None:
    write_jsonl(path, (a.to_dict() for a in assessments))
