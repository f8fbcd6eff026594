import json
import math

import pytest

from bonrewrite.cli import main
from bonrewrite.core import load_pools
from bonrewrite.inference import load_selections


def run_cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def bench(tmp_path_factory):
    root = tmp_path_factory.mktemp("bench")
    assert main(["make-synthetic", "--out", str(root), "--sessions", "30", "--topics", "20",
                 "--candidates", "8"]) == 0
    return root


@pytest.fixture(scope="module")
def staged(bench, tmp_path_factory):
    """index -> embed-ingest -> generate -> assess on the training sessions."""
    out = tmp_path_factory.mktemp("stages")
    steps = [
        ["index", "--passages", bench / "passages.jsonl", "--out", out / "bm25.json"],
        ["embed-ingest", "--passages", bench / "passages.jsonl", "--out", out / "vectors.bin"],
        ["generate", "--sessions", bench / "sessions_train.jsonl", "--fixtures", bench / "fixtures.jsonl",
         "--n", "8", "--out", out / "cands.jsonl"],
        ["assess", "--candidates", out / "cands.jsonl", "--qrels", bench / "qrels.txt",
         "--index", out / "bm25.json", "--vectors", out / "vectors.bin", "--out", out / "assess.jsonl"],
    ]
    for argv in steps:
        assert main([str(a) for a in argv]) == 0, argv
    return out


def test_eval_fixture_values(tmp_path, capsys):
    (tmp_path / "r.trec").write_text(
        "q1 Q0 a 1 3.0 t\nq1 Q0 b 2 2.0 t\nq1 Q0 c 3 1.0 t\n"
        "q2 Q0 x 1 3.0 t\nq2 Q0 y 2 2.0 t\nq2 Q0 z 3 1.0 t\n"
    )
    (tmp_path / "q.txt").write_text("q1 0 c 1\nq2 0 y 2\nq2 0 x 1\n")
    code, out, _ = run_cli(capsys, "eval", "--run", tmp_path / "r.trec", "--qrels", tmp_path / "q.txt",
                           "--per-query")
    assert code == 0
    rep = json.loads(out)
    assert rep["per_query"]["q1"]["ndcg@3"] == 0.5
    assert round(rep["per_query"]["q2"]["ndcg@3"], 4) == 0.8597
    assert rep["per_query"]["q1"]["mrr"] == pytest.approx(1 / 3)
    assert rep["mean"]["recall@10"] == 1.0
    assert rep["mean"]["mrr"] == pytest.approx((1 / 3 + 1) / 2)
    assert math.isclose(rep["mean"]["ndcg@3"], (0.5 + rep["per_query"]["q2"]["ndcg@3"]) / 2)


def test_train_twice_is_bitwise_identical(bench, staged, capsys):
    common = ["train", "--candidates", staged / "cands.jsonl", "--sessions", bench / "sessions_train.jsonl",
              "--assessments", staged / "assess.jsonl", "--seed", "7", "--epochs", "3",
              "--dimension", "256", "--hidden", "8"]
    assert run_cli(capsys, *common, "--out", staged / "m1.bin")[0] == 0
    assert run_cli(capsys, *common, "--out", staged / "m2.bin")[0] == 0
    assert (staged / "m1.bin").read_bytes() == (staged / "m2.bin").read_bytes()


def test_select_oracle_budget_one(bench, staged, capsys):
    code, *_ = run_cli(capsys, "select", "--candidates", staged / "cands.jsonl",
                       "--sessions", bench / "sessions_train.jsonl", "--strategy", "oracle",
                       "--budget", "1", "--assessments", staged / "assess.jsonl",
                       "--out", staged / "sel.jsonl")
    assert code == 0
    sels = load_selections(staged / "sel.jsonl")
    assert len(sels) == len(load_pools(staged / "cands.jsonl"))
    assert {s.chosen_index for s in sels} == {0}


def test_select_then_eval(bench, staged, capsys):
    run_cli(capsys, "select", "--candidates", staged / "cands.jsonl",
            "--sessions", bench / "sessions_train.jsonl", "--strategy", "oracle",
            "--budget", "1", "8", "--assessments", staged / "assess.jsonl", "--out", staged / "sel2.jsonl")
    code, out, _ = run_cli(capsys, "eval", "--selections", staged / "sel2.jsonl",
                           "--candidates", staged / "cands.jsonl", "--qrels", bench / "qrels.txt",
                           "--index", staged / "bm25.json", "--run-out", staged / "runs")
    assert code == 0
    by_budget = {r["provenance"]["budget"]: r["mean"]["mrr"] for r in json.loads(out)}
    assert by_budget[8] >= by_budget[1]
    assert (staged / "runs" / "oracle_n8.trec").exists()


def test_missing_file(tmp_path, capsys):
    code, _, err = run_cli(capsys, "eval", "--run", tmp_path / "nope.trec", "--qrels", tmp_path / "q.txt")
    assert code == 1
    assert "nope.trec" in err or "q.txt" in err


def test_schema_violation_names_field(tmp_path, capsys):
    (tmp_path / "s.jsonl").write_text('{"session_id": "s", "turn_index": 1, "history": []}\n')
    (tmp_path / "f.jsonl").write_text("")
    code, _, err = run_cli(capsys, "generate", "--sessions", tmp_path / "s.jsonl",
                           "--fixtures", tmp_path / "f.jsonl", "--out", tmp_path / "c.jsonl")
    assert code == 1
    assert "current_query" in err


def test_unknown_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["eval", "--bogus"])
    assert exc.value.code == 2


def test_reward_without_model(bench, staged, capsys):
    code, _, err = run_cli(capsys, "select", "--candidates", staged / "cands.jsonl",
                           "--sessions", bench / "sessions_train.jsonl", "--strategy", "reward",
                           "--budget", "1", "--out", staged / "x.jsonl")
    assert code == 1 and "--model" in err


def test_pipeline_writes_artifacts(bench, tmp_path, capsys):
    cfg = json.loads((bench / "config.json").read_text())
    cfg["output_dir"] = str(tmp_path / "out")
    cfg["data"] = {k: str(bench / v) for k, v in cfg["data"].items()}
    cfg.setdefault("training", {}).update({"epochs": 2, "hidden": 8})
    cfg.setdefault("encoder", {}).update({"dimension": 256})
    cfg.setdefault("generation", {}).update({"n": 8})
    cfg.setdefault("selection", {}).update({"budgets": [1, 2, 4, 8]})
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    code, out, _ = run_cli(capsys, "pipeline", "--config", tmp_path / "cfg.json")
    assert code == 0
    for name in ("candidates_train.jsonl", "candidates_test.jsonl", "assessments_train.jsonl",
                 "model.bin", "selections.jsonl", "report.json", "report.tsv", "runs/oracle_n8.trec"):
        assert (tmp_path / "out" / name).exists(), name
