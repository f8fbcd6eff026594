"""Stage helpers shared by the CLI, and the end-to-end ``pipeline`` driver."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .assessment import PoolAssessment, assess_pool, save_assessments
from .config import PipelineConfig, RetrievalSettings
from .core import (
    CandidatePool,
    ConversationSession,
    SessionRef,
    load_sessions,
    query_id,
    save_pools,
)
from .errors import AssessmentError, ConfigError, StrategyError
from .generation import (
    ChatCompletionsClient,
    GenerationClient,
    GenerationConfig,
    PromptTemplate,
    fixture_client,
    generate_pool,
    load_template,
)
from .inference import (
    First,
    MeanAggregation,
    Oracle,
    RandomChoice,
    RewardArgmax,
    SelectionResult,
    save_selections,
    select,
)
from .metrics import MetricReport, evaluate_run
from .retrieval import (
    DenseIndex,
    HashingEmbedder,
    SparseIndex,
    build_sparse_index,
    load_passages,
    read_dense_vectors,
    search_dense,
    search_sparse,
    write_dense_vectors,
)
from .reward import RewardModel, save_model, train
from .trec import Qrels, TrecRun, gold_label, read_qrels, write_run

log = logging.getLogger(__name__)


def generate_pools(
    client: GenerationClient,
    template: PromptTemplate,
    sessions: Iterable[ConversationSession],
    config: GenerationConfig,
) -> list[CandidatePool]:
    return [generate_pool(client, template, s, config) for s in sessions]


def assess_pools(
    pools: Iterable[CandidatePool],
    qrels: Qrels,
    sparse: SparseIndex,
    dense: DenseIndex,
    embedder,
    depth: int,
) -> list[PoolAssessment]:
    out = []
    for pool in pools:
        gold = gold_label(qrels, pool.session_id, pool.turn_index)
        if gold is None:
            raise AssessmentError(f"no relevant passage in qrels for pool {pool.ref}")
        records = assess_pool(pool, sparse, dense, embedder, gold, depth)
        out.append(PoolAssessment(pool.session_id, pool.turn_index, tuple(records)))
    return out


def make_strategy(
    name: str,
    *,
    model: RewardModel | None = None,
    assessment: PoolAssessment | None = None,
    embedder=None,
    rng: RandomChoice | None = None,
):
    if name == "reward":
        return RewardArgmax(model)
    if name == "oracle":
        return Oracle(assessment)
    if name == "random":
        return rng if rng is not None else RandomChoice(0)
    if name == "first":
        return First()
    if name == "mean":
        return MeanAggregation(embedder)
    raise StrategyError(f"unknown strategy {name!r}")


def select_all(
    name: str,
    pools: Sequence[CandidatePool],
    sessions: Mapping[SessionRef, ConversationSession],
    budgets: Sequence[int],
    *,
    model: RewardModel | None = None,
    assessments: Mapping[SessionRef, PoolAssessment] | None = None,
    embedder=None,
    seed: int = 0,
) -> list[SelectionResult]:
    """Selections for every pool and budget (pool-major order)."""
    rng = RandomChoice(seed)
    out = []
    for pool in pools:
        session = sessions.get(pool.ref)
        if session is None:
            raise StrategyError(f"no session for pool {pool.ref}")
        assessment = (assessments or {}).get(pool.ref)
        if name == "oracle" and assessment is None:
            raise StrategyError(f"oracle strategy has no assessment for pool {pool.ref}")
        strategy = make_strategy(name, model=model, assessment=assessment, embedder=embedder, rng=rng)
        for n in budgets:
            out.append(select(pool, session, strategy, n))
    return out


def retrieve_for_selections(
    selections: Iterable[SelectionResult],
    pools: Mapping[SessionRef, CandidatePool],
    sparse: SparseIndex | None,
    dense: DenseIndex | None,
    embedder,
    retriever: str,
    depth: int,
) -> TrecRun:
    """Run the chosen reformulation of each selection through a retriever."""
    run = TrecRun()
    for sel in selections:
        qid = query_id(sel.session_id, sel.turn_index)
        if sel.chosen_index is None:
            if sel.query_vector is None or dense is None:
                raise ConfigError(f"selection for {qid} has no candidate and needs dense retrieval")
            run.add(qid, search_dense(dense, sel.query_vector, depth))
            continue
        pool = pools.get((sel.session_id, sel.turn_index))
        if pool is None:
            raise ConfigError(f"no candidates for selection {qid}")
        query = pool.candidates[sel.chosen_index].standalone_query
        if retriever == "dense":
            if dense is None or embedder is None:
                raise ConfigError("dense retrieval needs passage vectors")
            run.add(qid, search_dense(dense, embedder.embed(query), depth))
        else:
            if sparse is None:
                raise ConfigError("sparse retrieval needs a passage collection or index")
            run.add(qid, search_sparse(sparse, query, depth))
    return run


def load_dense(passages, settings: RetrievalSettings, vectors: Path | None):
    embedder = HashingEmbedder(settings.dense_dimension, settings.dense_seed)
    if vectors is not None:
        return read_dense_vectors(vectors), embedder
    return embedder.embed_passages(passages), embedder


def _report_line(report: MetricReport) -> dict:
    return {**report.provenance, "queries": report.query_count, "mrr": report.mrr,
            "ndcg@3": report.ndcg_at_3, "recall@10": report.recall_at_10}


def run_pipeline(config: PipelineConfig, client: GenerationClient | None = None) -> list[MetricReport]:
    """generate -> assess -> train -> select -> eval, writing every artefact to ``output_dir``."""
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = config.data

    passages = load_passages(data.passages)
    sparse = build_sparse_index(passages, config.retrieval.bm25)
    dense, embedder = load_dense(passages, config.retrieval, data.vectors)
    if data.vectors is None:
        write_dense_vectors(out / "vectors.bin", dense)
    qrels = read_qrels(data.qrels)
    train_sessions = load_sessions(data.sessions_train)
    test_sessions = load_sessions(data.sessions_test)
    sessions = {s.ref: s for s in [*train_sessions, *test_sessions]}

    if client is None:
        client = fixture_client(data.fixtures) if data.fixtures else ChatCompletionsClient.from_env()
    template = load_template(data.template)
    log.info("generating candidates for %d + %d sessions", len(train_sessions), len(test_sessions))
    train_pools = generate_pools(client, template, train_sessions, config.generation)
    test_pools = generate_pools(client, template, test_sessions, config.generation)
    save_pools(out / "candidates_train.jsonl", train_pools)
    save_pools(out / "candidates_test.jsonl", test_pools)

    depth = config.retrieval.depth
    log.info("assessing candidates")
    train_assess = assess_pools(train_pools, qrels, sparse, dense, embedder, depth)
    test_assess = assess_pools(test_pools, qrels, sparse, dense, embedder, depth)
    save_assessments(out / "assessments_train.jsonl", train_assess)
    save_assessments(out / "assessments_test.jsonl", test_assess)

    log.info("training reward model")
    model = train(zip(train_pools, train_assess), sessions, config.training, config.encoder)
    save_model(model, out / "model.bin")

    smallest = min(len(p) for p in test_pools)
    budgets = [n for n in config.selection.budgets if n <= smallest]
    if len(budgets) < len(config.selection.budgets):
        log.warning("budgets above the smallest pool size (%d) were skipped", smallest)
    pools_by_ref = {p.ref: p for p in test_pools}
    assess_by_ref = {a.ref: a for a in test_assess}
    all_selections: list[SelectionResult] = []
    reports: list[MetricReport] = []
    (out / "runs").mkdir(exist_ok=True)
    for name in config.selection.strategies:
        selections = select_all(
            name, test_pools, sessions, budgets, model=model, assessments=assess_by_ref,
            embedder=embedder, seed=config.selection.random_seed,
        )
        all_selections.extend(selections)
        retriever = "dense" if name == "mean" else config.eval.retriever
        for n in budgets:
            chosen = [s for s in selections if s.budget == n]
            run = retrieve_for_selections(chosen, pools_by_ref, sparse, dense, embedder, retriever, depth)
            write_run(out / "runs" / f"{name}_n{n}.trec", run)
            reports.append(evaluate_run(
                run, qrels, config.eval.rel_threshold, config.eval.mrr_cutoff,
                provenance={"strategy": name, "budget": n, "retriever": retriever},
            ))
    save_selections(out / "selections.jsonl", all_selections)
    write_reports(out, reports)
    return reports


def write_reports(out: Path, reports: Sequence[MetricReport]) -> None:
    (out / "report.json").write_text(
        json.dumps([r.to_dict() for r in reports], indent=1) + "\n", encoding="utf-8"
    )
    lines = ["strategy\tbudget\tretriever\tqueries\tmrr\tndcg@3\trecall@10"]
    for r in reports:
        d = _report_line(r)
        lines.append("\t".join(str(d[k]) for k in
                               ("strategy", "budget", "retriever", "queries", "mrr", "ndcg@3", "recall@10")))
    (out / "report.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
