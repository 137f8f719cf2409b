"""Query aggregation: per-query top-K dense search into one candidate list.

K = ceil(size / |queries|); each query contributes its top-K hits in query
order and the concatenation is truncated to exactly ``size``.  An example
close to several queries appears once per query — duplicates are kept on
purpose so re-learning naturally weights especially relevant examples.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .backend.base import Backend
from .corpus import QuerySet
from .errors import PreconditionError
from .index import DenseIndex


@dataclass(frozen=True)
class CandidateEntry:
    """One retrieved occurrence: which example, via which query, at what rank."""

    example_id: str
    task_name: str
    query_index: int
    rank: int
    score: float

    def to_record(self) -> dict:
        return {
            "id": self.example_id,
            "task": self.task_name,
            "query_index": self.query_index,
            "rank": self.rank,
            "score": self.score,
        }


@dataclass(frozen=True)
class CandidateList:
    """Ordered retrieval result; duplicates across queries are permitted.

    ``underfilled`` is set when the searchable pool could not supply the
    requested number of entries.
    """

    entries: tuple[CandidateEntry, ...]
    underfilled: bool = False

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[CandidateEntry]:
        return iter(self.entries)

    def distinct_ids(self) -> list[str]:
        """Distinct example ids in first-occurrence order."""
        seen: dict[str, None] = {}
        for entry in self.entries:
            seen.setdefault(entry.example_id)
        return list(seen)


def per_query_k(size: int, query_count: int) -> int:
    return math.ceil(size / query_count)


def retrieve(
    index: DenseIndex, queries: QuerySet, size: int, backend: Backend
) -> CandidateList:
    """Dense-retrieve ``size`` candidate occurrences for a query set."""
    return retrieve_filtered(index, queries, size, (), backend)


def retrieve_filtered(
    index: DenseIndex,
    queries: QuerySet,
    size: int,
    excluded_tasks: Iterable[str],
    backend: Backend,
) -> CandidateList:
    """Like :func:`retrieve`, but rows of excluded tasks never participate.

    Filtering happens before the per-query truncation to K, so each query
    still contributes K surviving hits when enough remain.
    """
    if size < 1:
        raise PreconditionError("retrieval size must be positive")
    if len(index) == 0:
        raise PreconditionError("cannot retrieve from an empty index")
    excluded = set(excluded_tasks)

    row_mask = None
    if excluded:
        row_mask = np.array([task not in excluded for task in index.tasks], dtype=bool)
        if not row_mask.any():
            return CandidateList(entries=(), underfilled=True)

    k = per_query_k(size, len(queries))
    query_vectors = np.asarray(backend.encode(queries.input_texts()), dtype=np.float64)
    positions, scores = index.search_positions(query_vectors, k, row_mask=row_mask)

    entries: list[CandidateEntry] = []
    for query_index in range(positions.shape[0]):
        if len(entries) >= size:
            break
        for rank in range(positions.shape[1]):
            if len(entries) >= size:
                break
            pos = int(positions[query_index, rank])
            entries.append(
                CandidateEntry(
                    example_id=index.ids[pos],
                    task_name=index.tasks[pos],
                    query_index=query_index,
                    rank=rank,
                    score=float(scores[query_index, rank]),
                )
            )
    return CandidateList(entries=tuple(entries), underfilled=len(entries) < size)


def save_candidates(candidates: CandidateList, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for entry in candidates:
            fh.write(json.dumps(entry.to_record(), ensure_ascii=False) + "\n")


def load_candidates(path: str | Path) -> CandidateList:
    entries = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            entries.append(
                CandidateEntry(
                    example_id=rec["id"],
                    task_name=rec["task"],
                    query_index=int(rec["query_index"]),
                    rank=int(rec["rank"]),
                    score=float(rec["score"]),
                )
            )
    return CandidateList(entries=tuple(entries))
