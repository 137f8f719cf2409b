"""Corpus ingestion, filtering, and round-trip tests."""

from __future__ import annotations

import json
import logging

import pytest
from hypothesis import given, strategies as st

from recross import Example, ExampleCollection, QuerySet, filter_tasks, load_corpus, save_corpus
from recross.errors import CorpusFormatError, DuplicateExampleError, PreconditionError

from conftest import make_corpus


def write_jsonl(path, records):
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def test_load_counts_and_by_task(tmp_path):
    path = tmp_path / "corpus.jsonl"
    write_jsonl(path, [
        {"id": "a1", "task": "squad", "input": "q1", "output": "a"},
        {"id": "a2", "task": "squad", "input": "q2", "output": "b"},
        {"id": "b1", "task": "boolq", "input": "q3", "output": "yes"},
    ])
    corpus = load_corpus(path)
    assert len(corpus) == 3
    assert set(corpus.by_task) == {"squad", "boolq"}
    assert corpus.by_task["squad"] == [0, 1]


def test_load_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("", encoding="utf-8")
    assert len(load_corpus(path)) == 0


def test_duplicate_id_cites_both_lines(tmp_path):
    path = tmp_path / "dup.jsonl"
    records = [{"id": f"r{i}", "task": "t", "input": f"q{i}", "output": "a"} for i in range(1, 10)]
    records[3] = {"id": "x1", "task": "t", "input": "q4", "output": "a"}  # line 4
    records[8] = {"id": "x1", "task": "t", "input": "q9", "output": "a"}  # line 9
    write_jsonl(path, records)
    with pytest.raises(DuplicateExampleError, match=r"x1.*lines 4 and 9"):
        load_corpus(path)


def test_malformed_line_names_line_number(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"id": "a", "task": "t", "input": "q", "output": "a"}\nnot json\n', encoding="utf-8")
    with pytest.raises(CorpusFormatError, match="line 2"):
        load_corpus(path)


def test_missing_input_is_parse_error(tmp_path):
    path = tmp_path / "bad.jsonl"
    write_jsonl(path, [{"id": "a", "task": "t", "output": "x"}])
    with pytest.raises(CorpusFormatError, match="line 1"):
        load_corpus(path)


def test_id_synthesized_from_task_and_line(tmp_path):
    path = tmp_path / "noid.jsonl"
    write_jsonl(path, [
        {"task": "squad", "input": "q1", "output": "a"},
        {"task": "squad", "input": "q2", "output": "b"},
    ])
    corpus = load_corpus(path)
    assert [ex.example_id for ex in corpus] == ["squad-000001", "squad-000002"]


def test_unknown_field_warns_once(tmp_path, caplog):
    path = tmp_path / "extra.jsonl"
    write_jsonl(path, [
        {"id": "a", "task": "t", "input": "q", "output": "x", "weight": 3},
        {"id": "b", "task": "t", "input": "q2", "output": "y", "weight": 4},
    ])
    with caplog.at_level(logging.WARNING):
        corpus = load_corpus(path)
    assert len(corpus) == 2
    warnings = [r for r in caplog.records if "weight" in r.message]
    assert len(warnings) == 1


def test_round_trip_identity(tmp_path):
    corpus = make_corpus({"a": 4, "b": 3})
    path = tmp_path / "out.jsonl"
    save_corpus(corpus, path)
    again = load_corpus(path)
    assert [ex for ex in again] == list(corpus.examples)


def test_output_may_be_empty_input_may_not(tmp_path):
    path = tmp_path / "q.jsonl"
    write_jsonl(path, [{"id": "q1", "task": "t", "input": "question", "output": ""}])
    corpus = load_corpus(path)
    assert corpus[0].output_text == ""
    with pytest.raises(PreconditionError):
        Example("x", "t", "", "out")


def test_filter_tasks_basic():
    corpus = make_corpus({"a": 2, "b": 3})
    kept = filter_tasks(corpus, {"b"})
    assert len(kept) == 2
    assert set(kept.by_task) == {"a"}


def test_filter_tasks_identity_and_full():
    corpus = make_corpus({"a": 2, "b": 3})
    assert filter_tasks(corpus, set()) is corpus
    assert len(filter_tasks(corpus, {"a", "b"})) == 0
    # Excluding an absent task is a no-op.
    assert len(filter_tasks(corpus, {"zzz"})) == len(corpus)


@given(
    split=st.integers(min_value=0, max_value=4),
)
def test_filter_tasks_composes(split):
    tasks = ["t0", "t1", "t2", "t3"]
    corpus = make_corpus({t: 2 for t in tasks})
    a, b = set(tasks[:split]), set(tasks[split:])
    joint = filter_tasks(corpus, a | b)
    staged = filter_tasks(filter_tasks(corpus, a), b)
    assert list(joint.examples) == list(staged.examples)


def test_collection_rejects_duplicate_ids():
    ex = Example("same", "t", "q", "a")
    with pytest.raises(DuplicateExampleError):
        ExampleCollection([ex, ex])


def test_query_set_needs_queries():
    with pytest.raises(PreconditionError):
        QuerySet("task", [])
