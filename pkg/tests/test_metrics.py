import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bonrewrite.errors import EvaluationError, SchemaError
from bonrewrite.metrics import evaluate_run, mrr, ndcg_at_k, recall_at_k
from bonrewrite.trec import (
    TrecRun,
    gold_label,
    parse_qrels,
    parse_run,
    read_qrels,
    read_run,
    write_qrels,
    write_run,
)

from builders import random_run_and_qrels
from oracles import naive_ndcg, naive_recall, naive_rr

RUN = ["a", "b", "c", "d", "e", "f"]


class TestMrr:
    def test_examples(self):
        assert mrr(RUN, {"a": 1}) == 1.0
        assert mrr(RUN, {"zz": 1}) == 0.0
        assert mrr(RUN, {"d": 1}) == 0.25

    def test_cutoff_and_threshold(self):
        assert mrr(RUN, {"f": 1}, cutoff=5) == 0.0
        assert mrr(RUN, {"f": 1}) == pytest.approx(1 / 6)
        assert mrr(RUN, {"a": 1, "b": 2}, rel_threshold=2) == 0.5


class TestNdcg:
    def test_examples(self):
        assert ndcg_at_k(RUN, {"a": 1}, 3) == 1.0
        assert ndcg_at_k(RUN, {"c": 1}, 3) == 0.5
        v = ndcg_at_k(["x", "y", "z"], {"y": 2, "x": 1}, 3)
        assert round(v, 4) == 0.8597
        assert v == pytest.approx((1 + 2 / math.log2(3)) / (2 + 1 / math.log2(3)), abs=1e-15)

    def test_no_relevant(self):
        assert ndcg_at_k(RUN, {"a": 0}, 3) == 0.0


class TestRecall:
    def test_examples(self):
        run10 = [f"p{i}" for i in range(1, 11)]
        assert recall_at_k(run10, {"p5": 1}) == 1.0
        assert recall_at_k(run10, {"p5": 1, "zz": 1}) == 0.5
        assert recall_at_k(run10, {"zz": 1}) == 0.0

    def test_nothing_relevant(self):
        assert recall_at_k(RUN, {"a": 0}) is None


class TestEvaluateRun:
    def test_single_query(self):
        run = TrecRun()
        run.add("q", [("a", 3.0), ("b", 2.0)])
        rep = evaluate_run(run, {"q": {"a": 1}})
        assert (rep.mrr, rep.ndcg_at_3, rep.recall_at_10) == (1.0, 1.0, 1.0)

    def test_missing_query_skipped(self):
        run = TrecRun()
        run.add("q1", [("a", 1.0)])
        run.add("q2", [("a", 1.0)])
        rep = evaluate_run(run, {"q1": {"a": 1}})
        assert rep.skipped_queries == 1 and rep.query_count == 1

    def test_no_shared(self):
        run = TrecRun()
        run.add("q1", [("a", 1.0)])
        with pytest.raises(EvaluationError):
            evaluate_run(run, {"other": {"a": 1}})

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_matches_naive(self, seed):
        run, qrels = random_run_and_qrels(np.random.default_rng(seed), n_queries=20)
        rep = evaluate_run(run, qrels)
        ids = {q: [p for p, _ in e] for q, e in run.queries.items()}
        rr = [naive_rr(ids[q], qrels[q]) for q in qrels]
        nd = [naive_ndcg(ids[q], qrels[q], 3) for q in qrels]
        rc = [r for r in (naive_recall(ids[q], qrels[q], 10) for q in qrels) if r is not None]
        assert abs(rep.mrr - sum(rr) / len(rr)) <= 1e-9
        assert abs(rep.ndcg_at_3 - sum(nd) / len(nd)) <= 1e-9
        assert abs(rep.recall_at_10 - (sum(rc) / len(rc) if rc else 0.0)) <= 1e-9

    def test_qrels_order_invariant(self):
        run, qrels = random_run_and_qrels(np.random.default_rng(4))
        shuffled = {q: dict(reversed(list(j.items()))) for q, j in reversed(list(qrels.items()))}
        assert evaluate_run(run, qrels).to_dict() == evaluate_run(run, shuffled).to_dict()

    @given(a=st.floats(0.01, 100), b=st.floats(-100, 100))
    def test_affine_score_invariance(self, a, b):
        run, qrels = random_run_and_qrels(np.random.default_rng(7), n_queries=5)
        scaled = TrecRun({q: [(p, a * s + b) for p, s in e] for q, e in run.queries.items()})
        assert evaluate_run(run, qrels).per_query == evaluate_run(scaled, qrels).per_query


class TestTrecFiles:
    def test_run_roundtrip(self, tmp_path):
        run, _ = random_run_and_qrels(np.random.default_rng(1), n_queries=5)
        run.tag = "mytag"
        write_run(tmp_path / "r.trec", run)
        back = read_run(tmp_path / "r.trec")
        assert back.queries == run.queries and back.tag == "mytag"

    def test_qrels_roundtrip(self, tmp_path):
        _, qrels = random_run_and_qrels(np.random.default_rng(2), n_queries=5)
        write_qrels(tmp_path / "q.txt", qrels)
        assert read_qrels(tmp_path / "q.txt") == qrels

    def test_bad_run_rank(self):
        with pytest.raises(SchemaError, match="rank"):
            parse_run(["q Q0 a 1 2.0 t", "q Q0 b 3 1.0 t"])

    def test_bad_qrels(self):
        with pytest.raises(SchemaError, match="negative"):
            parse_qrels(["q 0 a -1"])
        with pytest.raises(SchemaError, match="duplicate"):
            parse_qrels(["q 0 a 1", "q 0 a 2"])

    def test_gold_label(self):
        g = gold_label({"s_2": {"a": 2, "b": 0}}, "s", 2)
        assert g.gold_passage_ids == frozenset({"a"})
        assert gold_label({"s_2": {"b": 0}}, "s", 2) is None
        assert gold_label({}, "s", 1) is None
