"""Domain types and corpus ingestion.

A corpus is a UTF-8 JSON Lines file, one object per line with keys
``id``, ``task``, ``input``, ``output``.  Text is stored verbatim; any
normalization happens at metric time, never at ingestion.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .errors import CorpusFormatError, DuplicateExampleError, PreconditionError

logger = logging.getLogger(__name__)

_KNOWN_KEYS = {"id", "task", "input", "output"}


@dataclass(frozen=True)
class Example:
    """One templatized task instance.

    ``output_text`` may be empty for unlabeled query examples; everything
    else is required to be non-empty.
    """

    example_id: str
    task_name: str
    input_text: str
    output_text: str = ""

    def __post_init__(self) -> None:
        if not self.example_id:
            raise PreconditionError("example_id must be non-empty")
        if not self.task_name:
            raise PreconditionError("task_name must be non-empty")
        if not self.input_text:
            raise PreconditionError("input_text must be non-empty")

    def to_record(self) -> dict[str, str]:
        return {
            "id": self.example_id,
            "task": self.task_name,
            "input": self.input_text,
            "output": self.output_text,
        }


class ExampleCollection:
    """An ordered, immutable collection of examples with a per-task index.

    Iteration order is insertion order; ``by_task`` maps each task name to
    the ascending list of positions holding its examples.
    """

    def __init__(self, examples: Iterable[Example]):
        self._examples: tuple[Example, ...] = tuple(examples)
        by_task: dict[str, list[int]] = {}
        by_id: dict[str, int] = {}
        for pos, ex in enumerate(self._examples):
            by_task.setdefault(ex.task_name, []).append(pos)
            if ex.example_id in by_id:
                raise DuplicateExampleError(
                    f"duplicate example_id {ex.example_id!r} at positions "
                    f"{by_id[ex.example_id]} and {pos}"
                )
            by_id[ex.example_id] = pos
        self._by_task = by_task
        self._by_id = by_id

    @property
    def examples(self) -> tuple[Example, ...]:
        return self._examples

    @property
    def by_task(self) -> dict[str, list[int]]:
        return self._by_task

    @property
    def task_names(self) -> list[str]:
        return list(self._by_task)

    def __len__(self) -> int:
        return len(self._examples)

    def __iter__(self) -> Iterator[Example]:
        return iter(self._examples)

    def __getitem__(self, pos: int) -> Example:
        return self._examples[pos]

    def __contains__(self, example_id: str) -> bool:
        return example_id in self._by_id

    def get(self, example_id: str) -> Example:
        """Look up an example by id; raises PreconditionError when unknown."""
        try:
            return self._examples[self._by_id[example_id]]
        except KeyError:
            raise PreconditionError(f"unknown example_id {example_id!r}") from None

    def task_examples(self, task_name: str) -> list[Example]:
        return [self._examples[p] for p in self._by_task.get(task_name, [])]


@dataclass(frozen=True)
class QuerySet:
    """A small set of unlabeled examples of one unseen task.

    ``target_task`` is evaluation bookkeeping only; retrieval never reads
    the queries' output_text.
    """

    target_task: str
    queries: tuple[Example, ...]

    def __init__(self, target_task: str, queries: Iterable[Example]):
        object.__setattr__(self, "target_task", target_task)
        object.__setattr__(self, "queries", tuple(queries))
        if not self.queries:
            raise PreconditionError("a query set needs at least one query")

    def __len__(self) -> int:
        return len(self.queries)

    def input_texts(self) -> list[str]:
        return [q.input_text for q in self.queries]


def _parse_line(line: str, line_no: int, warned_keys: set[str]) -> Example:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise CorpusFormatError(f"line {line_no}: invalid JSON ({exc.msg})") from exc
    if not isinstance(record, dict):
        raise CorpusFormatError(f"line {line_no}: expected a JSON object")

    for key in record.keys() - _KNOWN_KEYS:
        if key not in warned_keys:
            warned_keys.add(key)
            logger.warning("ignoring unknown corpus field %r (first seen on line %d)", key, line_no)

    task = record.get("task")
    if not isinstance(task, str) or not task:
        raise CorpusFormatError(f"line {line_no}: missing or empty 'task'")
    example_id = record.get("id")
    if example_id is None:
        example_id = f"{task}-{line_no:06d}"
    elif not isinstance(example_id, str) or not example_id:
        raise CorpusFormatError(f"line {line_no}: 'id' must be a non-empty string")
    input_text = record.get("input")
    if not isinstance(input_text, str) or not input_text:
        raise CorpusFormatError(f"line {line_no}: missing or empty 'input'")
    output_text = record.get("output", "")
    if not isinstance(output_text, str):
        raise CorpusFormatError(f"line {line_no}: 'output' must be a string")
    return Example(example_id, task, input_text, output_text)


def load_corpus(path: str | Path) -> ExampleCollection:
    """Load a JSON Lines corpus file, preserving file order.

    Records without an ``id`` get one synthesized from the task name and
    the 1-based line number.  Malformed lines and duplicate ids raise with
    the offending line number(s).
    """
    path = Path(path)
    examples: list[Example] = []
    seen: dict[str, int] = {}
    warned_keys: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            ex = _parse_line(line, line_no, warned_keys)
            if ex.example_id in seen:
                raise DuplicateExampleError(
                    f"duplicate example_id {ex.example_id!r} on lines "
                    f"{seen[ex.example_id]} and {line_no}"
                )
            seen[ex.example_id] = line_no
            examples.append(ex)
    return ExampleCollection(examples)


def save_corpus(corpus: Iterable[Example], path: str | Path) -> None:
    """Write examples as JSON Lines; load_corpus(save_corpus(c)) == c."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for ex in corpus:
            fh.write(json.dumps(ex.to_record(), ensure_ascii=False) + "\n")


def filter_tasks(corpus: ExampleCollection, excluded: Iterable[str]) -> ExampleCollection:
    """Drop every example whose task is in ``excluded``, preserving order."""
    excluded = set(excluded)
    if not excluded:
        return corpus
    return ExampleCollection(ex for ex in corpus if ex.task_name not in excluded)


def load_query_sets(path: str | Path) -> list[QuerySet]:
    """Read a queries JSONL file and group it into one QuerySet per task.

    Tasks appear in first-occurrence order; outputs are carried along but
    ignored by retrieval.
    """
    corpus = load_corpus(path)
    return [
        QuerySet(task, corpus.task_examples(task))
        for task in corpus.task_names
    ]
