"""Pair scoring and mean-score reranking of a candidate list.

Each distinct candidate is scored once against every query; a candidate's
utility is the arithmetic mean of its scores over all queries.  Candidate
occurrences (duplicates included) are then re-sorted by that mean, so the
final selection can keep repeats of an especially useful example.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backend.base import Backend, ModelHandle, candidate_scoring_text
from .corpus import ExampleCollection, QuerySet
from .errors import PreconditionError
from .retrieve import CandidateEntry, CandidateList


@dataclass(frozen=True)
class ScoreMatrix:
    """Pairwise scores: one row per query, one column per distinct candidate."""

    query_count: int
    candidate_ids: tuple[str, ...]
    scores: np.ndarray  # (query_count, len(candidate_ids)), values in [0, 1]

    def __post_init__(self) -> None:
        if self.scores.shape != (self.query_count, len(self.candidate_ids)):
            raise PreconditionError(
                f"score matrix shape {self.scores.shape} does not match "
                f"({self.query_count}, {len(self.candidate_ids)})"
            )
        if self.scores.size and (self.scores.min() < 0.0 or self.scores.max() > 1.0):
            raise PreconditionError("pair scores must lie in [0, 1]")

    def mean_by_candidate(self) -> dict[str, float]:
        means = self.scores.mean(axis=0)
        return {cid: float(means[i]) for i, cid in enumerate(self.candidate_ids)}


def score_all(
    queries: QuerySet,
    candidates: CandidateList,
    corpus: ExampleCollection,
    scorer: ModelHandle,
    backend: Backend,
) -> ScoreMatrix:
    """Score every (query, distinct candidate) pair with the backend scorer.

    Duplicate occurrences in the candidate list share one column; the
    candidate side is serialized as input text, newline, output text.
    """
    if len(candidates) == 0:
        raise PreconditionError("nothing to score: candidate list is empty")
    distinct = candidates.distinct_ids()
    candidate_texts = [candidate_scoring_text(corpus.get(cid)) for cid in distinct]

    pairs = [
        (query_text, candidate_text)
        for query_text in queries.input_texts()
        for candidate_text in candidate_texts
    ]
    flat = backend.score_pairs(scorer, pairs)
    matrix = np.asarray(flat, dtype=np.float64).reshape(len(queries), len(distinct))
    return ScoreMatrix(query_count=len(queries), candidate_ids=tuple(distinct), scores=matrix)


def rerank(
    matrix: ScoreMatrix, candidates: CandidateList, final_size: int
) -> CandidateList:
    """Keep the ``final_size`` best candidate occurrences by mean pair score.

    Ties break by original occurrence position, so the output is a
    deterministic sub-multiset of the input occurrences.  Entry scores are
    replaced by the mean utility score.
    """
    if final_size < 1:
        raise PreconditionError("final_size must be positive")
    if final_size > len(candidates):
        raise PreconditionError(
            f"final_size {final_size} exceeds the {len(candidates)} candidate occurrences"
        )
    means = matrix.mean_by_candidate()
    try:
        keyed = [(-means[entry.example_id], pos) for pos, entry in enumerate(candidates.entries)]
    except KeyError as exc:
        raise PreconditionError(f"candidate {exc} missing from the score matrix") from None
    keyed.sort()
    selected = []
    for neg_mean, pos in keyed[:final_size]:
        entry = candidates.entries[pos]
        selected.append(
            CandidateEntry(
                example_id=entry.example_id,
                task_name=entry.task_name,
                query_index=entry.query_index,
                rank=entry.rank,
                score=-neg_mean,
            )
        )
    return CandidateList(entries=tuple(selected), underfilled=False)
