"""TREC run and qrels files.

Run line:   ``qid Q0 passage_id rank score tag``
Qrels line: ``qid 0 passage_id grade``

Scores are written with ``repr`` so a run survives a write/read cycle
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .core import GoldLabel, query_id
from .errors import SchemaError
from .retrieval import RetrievalResult

Qrels = dict[str, dict[str, int]]


@dataclass
class TrecRun:
    """Ranked (passage_id, score) lists per query id, best first."""

    queries: dict[str, list[tuple[str, float]]] = field(default_factory=dict)
    tag: str = "bonrewrite"

    def add(self, qid: str, result: RetrievalResult | Iterable[tuple[str, float]]) -> None:
        if qid in self.queries:
            raise SchemaError(f"query {qid!r} already present in run")
        entries = result.entries if isinstance(result, RetrievalResult) else result
        self.queries[qid] = [(str(pid), float(s)) for pid, s in entries]

    def lines(self) -> Iterable[str]:
        for qid, entries in self.queries.items():
            for rank, (pid, s) in enumerate(entries, 1):
                yield f"{qid} Q0 {pid} {rank} {s!r} {self.tag}"


def write_run(path: str | Path, run: TrecRun) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in run.lines():
            fh.write(line + "\n")


def parse_run(lines: Iterable[str], source: str = "<run>") -> TrecRun:
    run = TrecRun()
    tags = set()
    last: dict[str, tuple[int, float]] = {}
    for lineno, line in enumerate(lines, 1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 6:
            raise SchemaError(f"{source}:{lineno}: expected 6 columns, got {len(parts)}")
        qid, _, pid, rank_s, score_s, tag = parts
        try:
            rank, s = int(rank_s), float(score_s)
        except ValueError as exc:
            raise SchemaError(f"{source}:{lineno}: bad rank or score ({exc})") from exc
        prev_rank, prev_score = last.get(qid, (0, float("inf")))
        if rank != prev_rank + 1:
            raise SchemaError(f"{source}:{lineno}: query {qid} rank {rank} follows {prev_rank}")
        if s > prev_score:
            raise SchemaError(f"{source}:{lineno}: query {qid} scores increase at rank {rank}")
        last[qid] = (rank, s)
        run.queries.setdefault(qid, []).append((pid, s))
        tags.add(tag)
    if len(tags) == 1:
        run.tag = tags.pop()
    return run


def read_run(path: str | Path) -> TrecRun:
    with open(path, encoding="utf-8") as fh:
        return parse_run(fh, str(path))


def parse_qrels(lines: Iterable[str], source: str = "<qrels>") -> Qrels:
    qrels: Qrels = {}
    for lineno, line in enumerate(lines, 1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 4:
            raise SchemaError(f"{source}:{lineno}: expected 4 columns, got {len(parts)}")
        qid, _, pid, grade_s = parts
        try:
            grade = int(grade_s)
        except ValueError as exc:
            raise SchemaError(f"{source}:{lineno}: grade {grade_s!r} is not an integer") from exc
        if grade < 0:
            raise SchemaError(f"{source}:{lineno}: negative grade {grade}")
        per_q = qrels.setdefault(qid, {})
        if pid in per_q:
            raise SchemaError(f"{source}:{lineno}: duplicate judgment for ({qid}, {pid})")
        per_q[pid] = grade
    return qrels


def read_qrels(path: str | Path) -> Qrels:
    with open(path, encoding="utf-8") as fh:
        return parse_qrels(fh, str(path))


def write_qrels(path: str | Path, qrels: Mapping[str, Mapping[str, int]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for qid, judged in qrels.items():
            for pid, grade in judged.items():
                fh.write(f"{qid} 0 {pid} {grade}\n")


def gold_label(qrels: Mapping[str, Mapping[str, int]], session_id: str, turn_index: int) -> GoldLabel | None:
    """Gold passages (grade > 0) for a session turn, or None if it has none."""
    judged = qrels.get(query_id(session_id, turn_index))
    if not judged:
        return None
    gold = frozenset(pid for pid, g in judged.items() if g > 0)
    if not gold:
        return None
    return GoldLabel(session_id, turn_index, gold, dict(judged))
