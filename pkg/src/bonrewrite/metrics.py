"""MRR, NDCG@k and Recall@k with trec_eval conventions.

Run lists are taken in their given order (rank 1 first). A passage counts as
relevant for MRR and recall when its grade reaches ``rel_threshold``; NDCG
uses the raw grades as linear gains.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from .errors import EvaluationError
from .trec import TrecRun

log = logging.getLogger(__name__)

RankedList = Sequence[tuple[str, float]] | Sequence[str]


def _ids(run_for_query: RankedList) -> list[str]:
    return [e if isinstance(e, str) else e[0] for e in run_for_query]


def mrr(
    run_for_query: RankedList,
    qrels_for_query: Mapping[str, int],
    cutoff: int | None = None,
    rel_threshold: int = 1,
) -> float:
    """Reciprocal rank of the first relevant passage; ``cutoff=None`` scans the whole list."""
    ids = _ids(run_for_query)
    if cutoff is not None:
        ids = ids[:cutoff]
    for rank, pid in enumerate(ids, 1):
        if qrels_for_query.get(pid, 0) >= rel_threshold:
            return 1.0 / rank
    return 0.0


def ndcg_at_k(run_for_query: RankedList, qrels_for_query: Mapping[str, int], k: int = 3) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    ideal = sorted((g for g in qrels_for_query.values() if g > 0), reverse=True)[:k]
    idcg = sum(g / math.log2(i + 2) for i, g in enumerate(ideal))
    if idcg == 0:
        return 0.0
    dcg = sum(
        qrels_for_query.get(pid, 0) / math.log2(i + 2)
        for i, pid in enumerate(_ids(run_for_query)[:k])
    )
    return dcg / idcg


def recall_at_k(
    run_for_query: RankedList,
    qrels_for_query: Mapping[str, int],
    k: int = 10,
    rel_threshold: int = 1,
) -> float | None:
    """Fraction of relevant passages in the top k; None when nothing is relevant."""
    if k < 1:
        raise ValueError("k must be >= 1")
    relevant = {pid for pid, g in qrels_for_query.items() if g >= rel_threshold}
    if not relevant:
        return None
    return len(relevant.intersection(_ids(run_for_query)[:k])) / len(relevant)


@dataclass
class MetricReport:
    per_query: dict[str, dict[str, float | None]]
    mrr: float
    ndcg_at_3: float
    recall_at_10: float
    query_count: int
    recall_query_count: int
    skipped_queries: int = 0
    provenance: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "provenance": self.provenance,
            "query_count": self.query_count,
            "recall_query_count": self.recall_query_count,
            "skipped_queries": self.skipped_queries,
            "mean": {"mrr": self.mrr, "ndcg@3": self.ndcg_at_3, "recall@10": self.recall_at_10},
            "per_query": self.per_query,
        }

    def tsv_lines(self) -> list[str]:
        tag = "\t".join(str(self.provenance.get(k, "")) for k in ("strategy", "budget"))
        lines = []
        for qid, vals in self.per_query.items():
            for name, v in vals.items():
                lines.append(f"{tag}\t{qid}\t{name}\t{'' if v is None else repr(v)}")
        for name, v in (("mrr", self.mrr), ("ndcg@3", self.ndcg_at_3), ("recall@10", self.recall_at_10)):
            lines.append(f"{tag}\tall\t{name}\t{v!r}")
        return lines


def evaluate_run(
    run: TrecRun,
    qrels: Mapping[str, Mapping[str, int]],
    rel_threshold: int = 1,
    mrr_cutoff: int | None = None,
    provenance: Mapping[str, Any] | None = None,
) -> MetricReport:
    """Per-query metrics and their means over queries present in both run and qrels."""
    shared = sorted(set(run.queries) & set(qrels))
    skipped = len(set(run.queries) - set(qrels))
    if skipped:
        log.warning("%d run queries have no judgments and were skipped", skipped)
    if not shared:
        raise EvaluationError("run and qrels share no query ids")
    per_query: dict[str, dict[str, float | None]] = {}
    for qid in shared:
        ranked, judged = run.queries[qid], qrels[qid]
        per_query[qid] = {
            "mrr": mrr(ranked, judged, mrr_cutoff, rel_threshold),
            "ndcg@3": ndcg_at_k(ranked, judged, 3),
            "recall@10": recall_at_k(ranked, judged, 10, rel_threshold),
        }
    recalls = [v["recall@10"] for v in per_query.values() if v["recall@10"] is not None]
    n = len(per_query)
    return MetricReport(
        per_query=per_query,
        mrr=math.fsum(v["mrr"] for v in per_query.values()) / n,
        ndcg_at_3=math.fsum(v["ndcg@3"] for v in per_query.values()) / n,
        recall_at_10=math.fsum(recalls) / len(recalls) if recalls else 0.0,
        query_count=n,
        recall_query_count=len(recalls),
        skipped_queries=skipped,
        provenance=dict(provenance or {}),
    )
