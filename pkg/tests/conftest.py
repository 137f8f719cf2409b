"""Shared fixtures: tiny corpora and deterministic backends."""

from __future__ import annotations

import pytest

from recross import BuiltinBackend, Example, ExampleCollection


def make_example(i: int, task: str, input_text: str | None = None, output: str | None = None) -> Example:
    return Example(
        example_id=f"{task}-{i:03d}",
        task_name=task,
        input_text=input_text or f"{task} question {i} token{i % 5} token{i % 3}",
        output_text=output if output is not None else f"{task} answer {i}",
    )


def make_corpus(spec: dict[str, int]) -> ExampleCollection:
    """spec maps task name to example count."""
    rows = []
    for task, count in spec.items():
        rows.extend(make_example(i, task) for i in range(count))
    return ExampleCollection(rows)


@pytest.fixture
def backend() -> BuiltinBackend:
    return BuiltinBackend(seed=7)


@pytest.fixture
def small_corpus() -> ExampleCollection:
    return make_corpus({"alpha": 30, "beta": 30, "gamma": 30})
