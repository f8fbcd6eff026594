"""Command-line entry point: ``bonrewrite <subcommand> ...``.

Every stage reads and writes the documented file formats, so stages can be
run one at a time or chained with ``pipeline``. Where a subcommand takes
``--config``, explicit flags win over values from the config file.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .assessment import load_assessments, save_assessments
from .config import STRATEGIES, load_config
from .core import load_pools, load_sessions, save_pools
from .errors import BonRewriteError, ConfigError
from .generation import (
    ChatCompletionsClient,
    GenerationConfig,
    RetryPolicy,
    fixture_client,
    load_template,
)
from .inference import load_selections, save_selections
from .metrics import evaluate_run
from .pipeline import (
    assess_pools,
    generate_pools,
    retrieve_for_selections,
    run_pipeline,
    select_all,
)
from .retrieval import (
    DEFAULT_DEPTH,
    Bm25Params,
    DenseIndex,
    HashingEmbedder,
    build_sparse_index,
    load_passages,
    load_sparse_index,
    read_dense_vectors,
    save_sparse_index,
    write_dense_vectors,
)
from .reward import EncoderConfig, TrainingConfig, load_model, save_model, train
from .synthetic import make_benchmark, write_benchmark
from .trec import read_qrels, read_run, write_run

log = logging.getLogger("bonrewrite")


def _pick(flag: Any, fallback: Any) -> Any:
    return fallback if flag is None else flag


def _section(args, name: str):
    if getattr(args, "config", None):
        return getattr(load_config(args.config), name)
    return None


def _sparse_from_args(args):
    if getattr(args, "index", None):
        return load_sparse_index(args.index)
    if getattr(args, "passages", None):
        params = Bm25Params(_pick(args.k1, 0.9), _pick(args.b, 0.4))
        return build_sparse_index(load_passages(args.passages), params)
    return None


def _dense_from_args(args) -> tuple[DenseIndex | None, HashingEmbedder]:
    embedder = HashingEmbedder(args.dense_dimension, args.dense_seed)
    if getattr(args, "vectors", None):
        return read_dense_vectors(args.vectors), embedder
    if getattr(args, "passages", None):
        return embedder.embed_passages(load_passages(args.passages)), embedder
    return None, embedder


# --------------------------------------------------------------------------
# subcommands


def cmd_index(args) -> int:
    params = Bm25Params(args.k1, args.b)
    index = build_sparse_index(load_passages(args.passages), params)
    save_sparse_index(args.out, index)
    print(json.dumps({"doc_count": index.doc_count, "terms": len(index.postings),
                      "avg_doc_length": index.avg_doc_length}))
    return 0


def cmd_embed_ingest(args) -> int:
    if args.npy:
        if not args.ids:
            raise ConfigError("--npy needs --ids (one passage id per line)")
        ids = [line.strip() for line in Path(args.ids).read_text(encoding="utf-8").splitlines() if line.strip()]
        index = DenseIndex(ids, np.load(args.npy))
    elif args.passages:
        index = HashingEmbedder(args.dimension, args.seed).embed_passages(load_passages(args.passages))
    else:
        raise ConfigError("give --passages or --npy/--ids")
    write_dense_vectors(args.out, index)
    print(json.dumps({"count": len(index), "dimension": index.dimension}))
    return 0


def cmd_generate(args) -> int:
    base = _section(args, "generation") or GenerationConfig()
    retry = RetryPolicy(_pick(args.max_attempts, base.retry.max_attempts), base.retry.backoff_seconds)
    config = GenerationConfig(
        n=_pick(args.n, base.n),
        temperature=_pick(args.temperature, base.temperature),
        max_output_tokens=base.max_output_tokens,
        request_seed_base=_pick(args.seed_base, base.request_seed_base),
        retry=retry,
        concurrency=_pick(args.concurrency, base.concurrency),
    )
    client = fixture_client(args.fixtures) if args.fixtures else ChatCompletionsClient.from_env()
    pools = generate_pools(client, load_template(args.template), load_sessions(args.sessions), config)
    save_pools(args.out, pools)
    dropped = sum(len(p.dropped) for p in pools)
    print(json.dumps({"pools": len(pools), "candidates": sum(len(p) for p in pools), "dropped": dropped}))
    return 0


def cmd_assess(args) -> int:
    sparse = _sparse_from_args(args)
    if sparse is None:
        raise ConfigError("assess needs --passages or --index")
    dense, embedder = _dense_from_args(args)
    if dense is None:
        raise ConfigError("assess needs --vectors or --passages for dense retrieval")
    pools = load_pools(args.candidates)
    out = assess_pools(pools, read_qrels(args.qrels), sparse, dense, embedder, args.depth)
    save_assessments(args.out, out)
    print(json.dumps({"pools": len(out)}))
    return 0


def cmd_train(args) -> int:
    base_t = _section(args, "training") or TrainingConfig()
    base_e = _section(args, "encoder") or EncoderConfig()
    tconf = TrainingConfig(
        margin=_pick(args.margin, base_t.margin),
        learning_rate=_pick(args.lr, base_t.learning_rate),
        epochs=_pick(args.epochs, base_t.epochs),
        warmup_fraction=_pick(args.warmup, base_t.warmup_fraction),
        seed=_pick(args.seed, base_t.seed),
        hidden=_pick(args.hidden, base_t.hidden),
        optimizer=_pick(args.optimizer, base_t.optimizer),
        weight_decay=base_t.weight_decay,
        accumulate=_pick(args.accumulate, base_t.accumulate),
    )
    econf = EncoderConfig(
        dimension=_pick(args.dimension, base_e.dimension),
        ngram_orders=base_e.ngram_orders,
        use_history=base_e.use_history and not args.no_history,
        history_turns=_pick(args.history_turns, base_e.history_turns),
        candidate_weight=base_e.candidate_weight,
        session_weight=base_e.session_weight,
        interaction_weight=base_e.interaction_weight,
        hash_seed=base_e.hash_seed,
    )
    pools = {p.ref: p for p in load_pools(args.candidates)}
    assessments = load_assessments(args.assessments)
    missing = [a.ref for a in assessments if a.ref not in pools]
    if missing:
        raise ConfigError(f"assessments reference pools missing from {args.candidates}: {missing[:3]}")
    model = train([(pools[a.ref], a) for a in assessments], load_sessions(args.sessions), tconf, econf)
    save_model(model, args.out)
    print(json.dumps({"epoch_losses": model.metadata["epoch_losses"], "params": model.param_count}))
    return 0


def cmd_select(args) -> int:
    pools = load_pools(args.candidates)
    sessions = {s.ref: s for s in load_sessions(args.sessions)}
    model = load_model(args.model) if args.model else None
    assessments = {a.ref: a for a in load_assessments(args.assessments)} if args.assessments else None
    if args.strategy == "reward" and model is None:
        raise ConfigError("--strategy reward needs --model")
    if args.strategy == "oracle" and assessments is None:
        raise ConfigError("--strategy oracle needs --assessments")
    embedder = HashingEmbedder(args.dense_dimension, args.dense_seed)
    budgets = sorted(args.budget)
    selections = select_all(args.strategy, pools, sessions, budgets, model=model,
                            assessments=assessments, embedder=embedder, seed=args.seed)
    save_selections(args.out, selections)
    print(json.dumps({"selections": len(selections)}))
    return 0


def cmd_eval(args) -> int:
    qrels = read_qrels(args.qrels)
    if args.run:
        runs = [({"run": str(args.run)}, read_run(args.run))]
    elif args.selections:
        if not args.candidates:
            raise ConfigError("--selections needs --candidates")
        pools = {p.ref: p for p in load_pools(args.candidates)}
        sparse = _sparse_from_args(args)
        dense, embedder = _dense_from_args(args)
        selections = load_selections(args.selections)
        groups: dict[tuple[str, int], list] = {}
        for s in selections:
            groups.setdefault((s.strategy, s.budget), []).append(s)
        runs = []
        for (strategy, budget), sels in groups.items():
            retriever = "dense" if strategy == "mean" else args.retriever
            run = retrieve_for_selections(sels, pools, sparse, dense, embedder, retriever, args.depth)
            if args.run_out:
                Path(args.run_out).mkdir(parents=True, exist_ok=True)
                write_run(Path(args.run_out) / f"{strategy}_n{budget}.trec", run)
            runs.append(({"strategy": strategy, "budget": budget, "retriever": retriever}, run))
    else:
        raise ConfigError("eval needs --run or --selections")
    reports = [
        evaluate_run(run, qrels, args.rel_threshold, args.mrr_cutoff, provenance=prov)
        for prov, run in runs
    ]
    payload = [r.to_dict() for r in reports]
    if not args.per_query:
        for p in payload:
            p.pop("per_query")
    print(json.dumps(payload[0] if len(payload) == 1 else payload, indent=1))
    if args.tsv:
        with open(args.tsv, "w", encoding="utf-8") as fh:
            for r in reports:
                fh.write("\n".join(r.tsv_lines()) + "\n")
    return 0


def cmd_pipeline(args) -> int:
    config = load_config(args.config)
    reports = run_pipeline(config)
    for r in reports:
        p = r.provenance
        print(f"{p['strategy']:>7} N={p['budget']:<3} MRR={r.mrr:.4f} "
              f"NDCG@3={r.ndcg_at_3:.4f} R@10={r.recall_at_10:.4f}")
    return 0


def cmd_make_synthetic(args) -> int:
    bench = make_benchmark(
        n_sessions=args.sessions, n_topics=args.topics, n_candidates=args.candidates, seed=args.seed,
    )
    path = write_benchmark(bench, args.out, args.train_fraction)
    print(json.dumps({"config": str(path), "passages": len(bench.passages),
                      "sessions": len(bench.sessions)}))
    return 0


# --------------------------------------------------------------------------


def _dense_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--vectors", type=Path, help="dense passage vectors (binary format)")
    p.add_argument("--dense-dimension", type=int, default=256)
    p.add_argument("--dense-seed", type=int, default=0)


def _sparse_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--passages", type=Path, help="passage collection (.tsv or .jsonl)")
    p.add_argument("--index", type=Path, help="BM25 index written by 'index'")
    p.add_argument("--k1", type=float)
    p.add_argument("--b", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bonrewrite", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build a BM25 index from a passage collection")
    p.add_argument("--passages", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--k1", type=float, default=0.9)
    p.add_argument("--b", type=float, default=0.4)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("embed-ingest", help="write passage vectors in the binary vector format")
    p.add_argument("--passages", type=Path, help="embed passages with the hashing embedder")
    p.add_argument("--npy", type=Path, help="ingest an external (count, dim) .npy matrix")
    p.add_argument("--ids", type=Path, help="passage ids for --npy, one per line")
    p.add_argument("--dimension", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_embed_ingest)

    p = sub.add_parser("generate", help="sample candidate pools for each session")
    p.add_argument("--sessions", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--fixtures", type=Path, help="replay stored outputs instead of calling an API")
    p.add_argument("--template", type=Path)
    p.add_argument("--config", type=Path)
    p.add_argument("--n", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--seed-base", type=int)
    p.add_argument("--max-attempts", type=int)
    p.add_argument("--concurrency", type=int)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("assess", help="rank candidates by fused gold-passage reciprocal rank")
    p.add_argument("--candidates", type=Path, required=True)
    p.add_argument("--qrels", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--depth", type=int, default=DEFAULT_DEPTH)
    _sparse_flags(p)
    _dense_flags(p)
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("train", help="train the reward model on assessed pools")
    p.add_argument("--candidates", type=Path, required=True)
    p.add_argument("--sessions", type=Path, required=True)
    p.add_argument("--assessments", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--config", type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--margin", type=float)
    p.add_argument("--warmup", type=float)
    p.add_argument("--hidden", type=int)
    p.add_argument("--dimension", type=int, help="hashed width per feature block")
    p.add_argument("--history-turns", type=int)
    p.add_argument("--no-history", action="store_true", help="drop conversation history from the encoder")
    p.add_argument("--optimizer", choices=["sgd", "adamw"])
    p.add_argument("--accumulate", choices=["pool", "epoch"])
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("select", help="pick one candidate per pool")
    p.add_argument("--candidates", type=Path, required=True)
    p.add_argument("--sessions", type=Path, required=True)
    p.add_argument("--strategy", choices=STRATEGIES, required=True)
    p.add_argument("--budget", type=int, nargs="+", required=True)
    p.add_argument("--model", type=Path)
    p.add_argument("--assessments", type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dense-dimension", type=int, default=256)
    p.add_argument("--dense-seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("eval", help="MRR / NDCG@3 / Recall@10 of a run or of selections")
    p.add_argument("--qrels", type=Path, required=True)
    p.add_argument("--run", type=Path)
    p.add_argument("--selections", type=Path)
    p.add_argument("--candidates", type=Path)
    p.add_argument("--retriever", choices=["sparse", "dense"], default="sparse")
    p.add_argument("--depth", type=int, default=DEFAULT_DEPTH)
    p.add_argument("--run-out", type=Path, help="directory for the generated run files")
    p.add_argument("--mrr-cutoff", type=int, default=None)
    p.add_argument("--rel-threshold", type=int, default=1)
    p.add_argument("--per-query", action="store_true")
    p.add_argument("--tsv", type=Path)
    _sparse_flags(p)
    _dense_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", help="generate -> assess -> train -> select -> eval")
    p.add_argument("--config", type=Path, required=True)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("make-synthetic", help="write the synthetic benchmark and a pipeline config")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--sessions", type=int, default=400)
    p.add_argument("--topics", type=int, default=250)
    p.add_argument("--candidates", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-fraction", type=float, default=0.5)
    p.set_defaults(func=cmd_make_synthetic)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (BonRewriteError, OSError, ValueError) as exc:
        print(f"bonrewrite {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
