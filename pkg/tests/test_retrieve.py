"""Query aggregation: per-query K, truncation, duplicates, task filtering."""

from __future__ import annotations

import numpy as np
import pytest

from recross import BuiltinBackend, DenseIndex, QuerySet, retrieve, retrieve_filtered
from recross.errors import PreconditionError
from recross.retrieve import per_query_k

from conftest import make_corpus, make_example
from test_index import brute_force_ranking


class ScriptedEncoder(BuiltinBackend):
    """Encodes texts by looking them up in a fixed vector table."""

    def __init__(self, table: dict[str, np.ndarray]):
        super().__init__(seed=0)
        self.table = table

    def encode(self, texts):
        return np.stack([np.asarray(self.table[t], dtype=np.float32) for t in texts])


def planted_index(n: int, dim: int, seed: int, tasks: list[str] | None = None) -> DenseIndex:
    rng = np.random.default_rng(seed)
    rows = rng.normal(size=(n, dim))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    task_names = tasks or [f"task-{i % 4}" for i in range(n)]
    return DenseIndex(rows.astype(np.float32), [f"id-{i}" for i in range(n)], task_names)


def query_set(task: str, texts: list[str]) -> QuerySet:
    return QuerySet(task, [make_example(i, task, input_text=t, output="") for i, t in enumerate(texts)])


def test_k_arithmetic_main_configuration(backend):
    # 16 queries, candidate size 1024 -> 64 hits per query, 1024 entries.
    corpus = make_corpus({"up": 80})
    from recross import build_index

    index = build_index(corpus, backend)
    queries = QuerySet("unseen", [make_example(i, "unseen", output="") for i in range(16)])
    result = retrieve(index, queries, size=1024, backend=backend)
    assert per_query_k(1024, 16) == 64
    assert len(result) == 1024
    assert not result.underfilled
    per_query = {}
    for entry in result:
        per_query[entry.query_index] = per_query.get(entry.query_index, 0) + 1
    assert per_query == {i: 64 for i in range(16)}


def test_single_query_gets_its_own_topk():
    index = planted_index(520, 12, seed=0)
    rng = np.random.default_rng(1)
    qvec = rng.normal(size=12)
    enc = ScriptedEncoder({"q": qvec})
    result = retrieve(index, query_set("u", ["q"]), size=512, backend=enc)
    assert len(result) == 512
    expected = brute_force_ranking(index, qvec)[:512]
    assert [e.example_id for e in result] == [index.ids[pos] for pos, _ in expected]


def test_truncation_hand_trace_three_queries():
    # 20-row synthetic index, |Q|=3, size=10 -> K=4; 12 hits truncated to 10,
    # so query 2 contributes only its first 2.
    index = planted_index(20, 8, seed=2)
    rng = np.random.default_rng(3)
    vectors = {f"q{i}": rng.normal(size=8) for i in range(3)}
    enc = ScriptedEncoder(vectors)
    result = retrieve(index, query_set("u", ["q0", "q1", "q2"]), size=10, backend=enc)

    assert per_query_k(10, 3) == 4
    assert len(result) == 10
    expected_ids = []
    for i, text in enumerate(["q0", "q1", "q2"]):
        top = brute_force_ranking(index, vectors[text])[:4]
        expected_ids.extend(index.ids[pos] for pos, _ in top)
    assert [e.example_id for e in result] == expected_ids[:10]
    contributions = [sum(1 for e in result if e.query_index == i) for i in range(3)]
    assert contributions == [4, 4, 2]


def test_entries_grouped_by_query_then_rank():
    index = planted_index(30, 8, seed=4)
    rng = np.random.default_rng(5)
    enc = ScriptedEncoder({f"q{i}": rng.normal(size=8) for i in range(4)})
    result = retrieve(index, query_set("u", [f"q{i}" for i in range(4)]), size=20, backend=enc)
    keys = [(e.query_index, e.rank) for e in result]
    assert keys == sorted(keys)


def test_shared_nearest_neighbor_duplicated():
    index = planted_index(15, 6, seed=6)
    target = index.rows[7].astype(np.float64)
    enc = ScriptedEncoder({"q0": target * 2.0, "q1": target * 3.0})
    result = retrieve(index, query_set("u", ["q0", "q1"]), size=6, backend=enc)
    hits_for_7 = [e for e in result if e.example_id == "id-7"]
    assert len(hits_for_7) == 2  # one per query; duplicates are kept


def test_retrieval_ignores_query_outputs(backend):
    corpus = make_corpus({"up": 40})
    from recross import build_index

    index = build_index(corpus, backend)
    q1 = QuerySet("u", [make_example(i, "u", output="") for i in range(3)])
    q2 = QuerySet("u", [make_example(i, "u", output="SCRAMBLED TRUTH") for i in range(3)])
    r1 = retrieve(index, q1, size=12, backend=backend)
    r2 = retrieve(index, q2, size=12, backend=backend)
    assert r1 == r2


def test_multiset_property_every_entry_in_its_querys_topk():
    index = planted_index(50, 10, seed=7)
    rng = np.random.default_rng(8)
    vectors = {f"q{i}": rng.normal(size=10) for i in range(5)}
    enc = ScriptedEncoder(vectors)
    size = 23
    k = per_query_k(size, 5)
    result = retrieve(index, query_set("u", sorted(vectors)), size=size, backend=enc)
    for entry in result:
        top = {index.ids[pos] for pos, _ in brute_force_ranking(index, vectors[f"q{entry.query_index}"])[:k]}
        assert entry.example_id in top


def test_monotonicity_in_size():
    index = planted_index(40, 8, seed=9)
    rng = np.random.default_rng(10)
    vectors = {f"q{i}": rng.normal(size=8) for i in range(4)}
    enc = ScriptedEncoder(vectors)
    qs = query_set("u", sorted(vectors))
    small = retrieve(index, qs, size=12, backend=enc)
    large = retrieve(index, qs, size=24, backend=enc)
    small_pairs = {(e.example_id, e.query_index) for e in small}
    large_pairs = {(e.example_id, e.query_index) for e in large}
    assert small_pairs <= large_pairs


def test_empty_index_like_sizes():
    index = planted_index(5, 4, seed=11)
    enc = ScriptedEncoder({"q": np.ones(4)})
    with pytest.raises(PreconditionError):
        retrieve(index, query_set("u", ["q"]), size=0, backend=enc)


class TestFiltered:
    def test_no_exclusions_identical(self):
        index = planted_index(30, 6, seed=12)
        enc = ScriptedEncoder({"q": np.ones(6)})
        qs = query_set("u", ["q"])
        assert retrieve(index, qs, 10, enc) == retrieve_filtered(index, qs, 10, set(), enc)

    def test_excluded_task_never_appears_and_matches_filtered_oracle(self):
        index = planted_index(40, 8, seed=13)
        rng = np.random.default_rng(14)
        vectors = {"q0": rng.normal(size=8), "q1": rng.normal(size=8)}
        enc = ScriptedEncoder(vectors)
        qs = query_set("u", ["q0", "q1"])
        excluded = {"task-0"}
        result = retrieve_filtered(index, qs, 10, excluded, enc)
        assert all(e.task_name != "task-0" for e in result)
        assert len(result) == 10
        # Filtered brute-force oracle per query.
        k = per_query_k(10, 2)
        expected = []
        for i, text in enumerate(["q0", "q1"]):
            ranked = [
                (pos, s) for pos, s in brute_force_ranking(index, vectors[text])
                if index.tasks[pos] not in excluded
            ][:k]
            expected.extend(index.ids[pos] for pos, _ in ranked)
        assert [e.example_id for e in result] == expected[:10]

    def test_exclusion_refills_from_next_tasks(self):
        # All top hits belong to one task; excluding it must pull in others.
        rng = np.random.default_rng(15)
        probe = rng.normal(size=6)
        probe /= np.linalg.norm(probe)
        near = probe[None, :] + 0.01 * rng.normal(size=(5, 6))
        far = rng.normal(size=(10, 6))
        rows = np.vstack([near, far])
        rows /= np.linalg.norm(rows, axis=1, keepdims=True)
        tasks = ["hog"] * 5 + [f"t{i}" for i in range(10)]
        index = DenseIndex(rows.astype(np.float32), [f"id-{i}" for i in range(15)], tasks)
        enc = ScriptedEncoder({"q": probe})
        qs = query_set("u", ["q"])

        unfiltered = retrieve(index, qs, 5, enc)
        assert {e.task_name for e in unfiltered} == {"hog"}
        filtered = retrieve_filtered(index, qs, 5, {"hog"}, enc)
        assert len(filtered) == 5
        assert all(e.task_name != "hog" for e in filtered)

    def test_exclude_all_tasks_empty_with_warning(self):
        index = planted_index(10, 4, seed=16, tasks=["a"] * 5 + ["b"] * 5)
        enc = ScriptedEncoder({"q": np.ones(4)})
        result = retrieve_filtered(index, query_set("u", ["q"]), 5, {"a", "b"}, enc)
        assert len(result) == 0
        assert result.underfilled

    def test_underfilled_flag_when_pool_too_small(self):
        index = planted_index(10, 4, seed=17, tasks=["a"] * 8 + ["b"] * 2)
        enc = ScriptedEncoder({"q": np.ones(4)})
        result = retrieve_filtered(index, query_set("u", ["q"]), 6, {"a"}, enc)
        assert len(result) == 2
        assert result.underfilled
