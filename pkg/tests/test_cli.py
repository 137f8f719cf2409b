"""CLI verbs exercised end to end in a temp workspace with the builtin backend."""

from __future__ import annotations

import json

import pytest

from recross.cli import main, make_backend, build_parser
from recross.backend import BuiltinBackend, HttpBackend
from recross.config import RunConfig
from recross.corpus import load_corpus, save_corpus

from conftest import make_corpus, make_example


@pytest.fixture
def workspace(tmp_path):
    corpus = make_corpus({"up_a": 40, "up_b": 40})
    corpus_path = tmp_path / "corpus.jsonl"
    save_corpus(corpus, corpus_path)

    queries = [make_example(i, "unseen", input_text=f"unseen query {i} alpha", output="") for i in range(4)]
    queries_path = tmp_path / "queries.jsonl"
    save_corpus(queries, queries_path)

    pool = [make_example(i, "unseen", input_text=f"unseen pool {i} beta", output="") for i in range(16)]
    pool_path = tmp_path / "pool.jsonl"
    save_corpus(pool, pool_path)

    evals = [
        make_example(100 + i, "unseen", input_text=f"eval {i}", output=f"eval {i}" if i % 2 == 0 else "zzz")
        for i in range(6)
    ]
    eval_path = tmp_path / "eval.jsonl"
    save_corpus(evals, eval_path)
    return tmp_path


def run_cli(*argv: str) -> int:
    return main(list(argv))


def test_build_index_retrieve_rerank(workspace, capsys):
    index_path = workspace / "up.idx"
    assert run_cli("--seed", "7", "build-index", "--corpus", str(workspace / "corpus.jsonl"),
                   "--out", str(index_path)) == 0
    assert index_path.exists()

    candidates_path = workspace / "candidates.jsonl"
    assert run_cli("--seed", "7", "retrieve", "--index", str(index_path),
                   "--queries", str(workspace / "queries.jsonl"),
                   "--size", "16", "--out", str(candidates_path)) == 0
    lines = candidates_path.read_text().splitlines()
    assert len(lines) == 16
    record = json.loads(lines[0])
    assert set(record) == {"id", "task", "query_index", "rank", "score"}

    final_path = workspace / "final.jsonl"
    assert run_cli("--seed", "7", "rerank", "--candidates", str(candidates_path),
                   "--queries", str(workspace / "queries.jsonl"),
                   "--corpus", str(workspace / "corpus.jsonl"),
                   "--final-size", "8", "--out", str(final_path)) == 0
    assert len(final_path.read_text().splitlines()) == 8


def test_exclusion_via_flag(workspace):
    index_path = workspace / "filtered.idx"
    run_cli("--seed", "7", "build-index", "--corpus", str(workspace / "corpus.jsonl"),
            "--out", str(index_path), "--exclude", "up_b")
    candidates_path = workspace / "cand.jsonl"
    run_cli("--seed", "7", "retrieve", "--index", str(index_path),
            "--queries", str(workspace / "queries.jsonl"), "--size", "12",
            "--out", str(candidates_path))
    tasks = {json.loads(line)["task"] for line in candidates_path.read_text().splitlines()}
    assert tasks == {"up_a"}


def test_mine_build_pairs_train(workspace, tmp_path):
    # Mining needs a task with enough examples plus donors.
    corpus_rows = list(load_corpus(workspace / "corpus.jsonl"))
    corpus_rows += [make_example(i, "probe", input_text=f"probe {i} gamma") for i in range(12)]
    big_corpus = tmp_path / "mine_corpus.jsonl"
    save_corpus(corpus_rows, big_corpus)
    index_path = tmp_path / "mine.idx"
    run_cli("--seed", "7", "build-index", "--corpus", str(big_corpus), "--out", str(index_path))

    params = tmp_path / "miner.conf"
    params.write_text(
        "query_size=2\nholdout_size=4\npool_size=200\nrounds=2\ngroup_count=4\nselection_size=4\n",
        encoding="utf-8",
    )
    tuples_path = tmp_path / "tuples.jsonl"
    assert run_cli("--seed", "3", "mine", "--corpus", str(big_corpus), "--index", str(index_path),
                   "--tasks", "probe", "--params", str(params), "--out", str(tuples_path)) == 0
    record = json.loads(tuples_path.read_text().splitlines()[0])
    assert record["query_task"] == "probe"
    assert len(record["positive_ids"]) == 4

    pairs_path = tmp_path / "pairs.jsonl"
    assert run_cli("build-pairs", "--tuples", str(tuples_path), "--corpus", str(big_corpus),
                   "--out", str(pairs_path)) == 0
    pair_lines = [json.loads(l) for l in pairs_path.read_text().splitlines()]
    assert len(pair_lines) == 2 * 2 * 4  # queries x (positives + negatives)
    assert {p["label"] for p in pair_lines} == {0, 1}

    model_path = tmp_path / "scorer.json"
    assert run_cli("train-reranker", "--pairs", str(pairs_path), "--out", str(model_path)) == 0
    assert json.loads(model_path.read_text())["model_id"].startswith("clf-")


def test_relearn_and_evaluate(workspace, tmp_path):
    # Model handles must survive across invocations: share a state file.
    state = str(tmp_path / "backend-state.json")
    index_path = workspace / "up.idx"
    run_cli("--seed", "7", "build-index", "--corpus", str(workspace / "corpus.jsonl"),
            "--out", str(index_path))
    candidates_path = workspace / "cand.jsonl"
    run_cli("--seed", "7", "retrieve", "--index", str(index_path),
            "--queries", str(workspace / "queries.jsonl"), "--size", "8",
            "--out", str(candidates_path))
    model_path = tmp_path / "model.json"
    assert run_cli("--seed", "7", "--backend-state", state, "relearn",
                   "--corpus", str(workspace / "corpus.jsonl"),
                   "--retrieved", str(candidates_path), "--out", str(model_path)) == 0
    model_id = json.loads(model_path.read_text())["model_id"]
    assert model_id.startswith("ft-")

    out_path = tmp_path / "eval.json"
    assert run_cli("--seed", "7", "--backend-state", state, "evaluate", "--model", model_id,
                   "--eval", str(workspace / "eval.jsonl"), "--metric", "softem",
                   "--out", str(out_path)) == 0
    payload = json.loads(out_path.read_text())
    assert payload["scores"][0]["task"] == "unseen"
    assert payload["scores"][0]["value"] == 50.0


def test_run_and_report(workspace, tmp_path, capsys):
    out_dir = tmp_path / "run_out"
    assert run_cli("--seed", "5", "--out-dir", str(out_dir), "run",
                   "--corpus", str(workspace / "corpus.jsonl"),
                   "--query-pool", str(workspace / "pool.jsonl"),
                   "--eval", str(workspace / "eval.jsonl"),
                   "--rounds", "2", "--query-size", "4",
                   "--final-size", "6", "--upsample-ratio", "2") == 0
    assert (out_dir / "manifest.json").exists()
    assert (out_dir / "scores.json").exists()
    assert (out_dir / "report" / "per_task_scores.png").exists()
    assert (out_dir / "report" / "task_distribution.png").exists()
    manifest = json.loads((out_dir / "manifest.json").read_text())
    assert manifest["mode"] == "full"
    assert manifest["partial"] is False

    report_dir = tmp_path / "rep"
    assert run_cli("--out-dir", str(report_dir), "report",
                   "--scores", str(out_dir / "scores.json"),
                   "--distribution", str(out_dir / "report" / "distribution.csv")) == 0
    assert (report_dir / "round_stats.csv").exists()
    out = capsys.readouterr().out
    assert "overall softem" in out


def test_run_zero_shot_mode(workspace, tmp_path):
    out_dir = tmp_path / "zs"
    assert run_cli("--seed", "5", "--out-dir", str(out_dir), "run",
                   "--corpus", str(workspace / "corpus.jsonl"),
                   "--query-pool", str(workspace / "pool.jsonl"),
                   "--eval", str(workspace / "eval.jsonl"),
                   "--rounds", "3", "--query-size", "4", "--mode", "zero-shot") == 0
    payload = json.loads((out_dir / "scores.json").read_text())
    values = {s["value"] for s in payload["scores"]}
    assert len(values) == 1  # frozen model: identical in every round


def test_cli_error_exit_code(tmp_path):
    missing = tmp_path / "nope.idx"
    code = run_cli("retrieve", "--index", str(missing), "--queries", str(missing),
                   "--size", "4", "--out", str(tmp_path / "x.jsonl"))
    assert code == 2 or isinstance(code, int)


def test_backend_resolution(monkeypatch):
    parser = build_parser()
    config = RunConfig()

    args = parser.parse_args(["--backend", "builtin", "serve"])
    assert isinstance(make_backend(args, config), BuiltinBackend)

    args = parser.parse_args(["--backend-url", "http://example:1234", "serve"])
    backend = make_backend(args, config)
    assert isinstance(backend, HttpBackend)
    assert backend.base_url == "http://example:1234"

    monkeypatch.setenv("RECROSS_BACKEND_URL", "http://fromenv:9")
    args = parser.parse_args(["serve"])
    backend = make_backend(args, config)
    assert isinstance(backend, HttpBackend)
    assert backend.base_url == "http://fromenv:9"

    # Explicit builtin wins over the environment.
    args = parser.parse_args(["--backend", "builtin", "serve"])
    assert isinstance(make_backend(args, config), BuiltinBackend)

    monkeypatch.delenv("RECROSS_BACKEND_URL")
    args = parser.parse_args(["serve"])
    assert isinstance(make_backend(args, config), BuiltinBackend)


def test_config_file_with_flag_override(workspace, tmp_path):
    config_path = tmp_path / "run.conf"
    config_path.write_text("final_size=6\nquery_size=4\nrng_seed=5\n", encoding="utf-8")
    out_dir = tmp_path / "cfg_run"
    assert run_cli("--config", str(config_path), "--out-dir", str(out_dir), "run",
                   "--corpus", str(workspace / "corpus.jsonl"),
                   "--query-pool", str(workspace / "pool.jsonl"),
                   "--eval", str(workspace / "eval.jsonl"),
                   "--rounds", "2", "--final-size", "4") == 0
    manifest = json.loads((out_dir / "manifest.json").read_text())
    assert manifest["config"]["final_size"] == 4  # flag beats file
    assert manifest["config"]["query_size"] == 4  # file beats default
