"""Metrics and evaluation: exact match, soft exact match, round statistics.

Normalization before matching: trim, collapse internal whitespace runs to
single spaces, compare case-insensitively.  Soft exact match additionally
accepts mutual substring matches of the normalized strings, which absorbs
trailing punctuation noise and "A" vs "A: full answer" style outputs.
"""

from __future__ import annotations

import enum
import math
import statistics
from dataclasses import dataclass
from typing import Mapping, Sequence

from .backend.base import Backend, ModelHandle
from .corpus import Example, ExampleCollection
from .errors import PreconditionError
from .retrieve import CandidateList


class Metric(enum.Enum):
    EM = "em"
    SOFT_EM = "softem"

    @classmethod
    def parse(cls, name: str) -> "Metric":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise PreconditionError(f"unknown metric {name!r}; use 'em' or 'softem'") from None


def normalize_answer(text: str) -> str:
    """Trim, collapse whitespace runs, casefold."""
    return " ".join(text.split()).casefold()


def exact_match(prediction: str, truth: str) -> int:
    """1 iff the normalized strings are equal."""
    return int(normalize_answer(prediction) == normalize_answer(truth))


def soft_em(prediction: str, truth: str) -> int:
    """Exact match extended to mutual substring matches after normalization.

    An empty normalized side never matches a non-empty one.
    """
    p, t = normalize_answer(prediction), normalize_answer(truth)
    if p == t:
        return 1
    if not p or not t:
        return 0
    return int(p in t or t in p)


_METRIC_FN = {Metric.EM: exact_match, Metric.SOFT_EM: soft_em}


@dataclass(frozen=True)
class TaskScore:
    """Score (%) of one model on one task's eval set in one round."""

    task: str
    round_index: int
    metric: Metric
    value: float
    example_count: int

    def to_record(self) -> dict:
        return {
            "task": self.task,
            "round": self.round_index,
            "metric": self.metric.value,
            "value": self.value,
            "examples": self.example_count,
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "TaskScore":
        return cls(
            task=str(rec["task"]),
            round_index=int(rec["round"]),
            metric=Metric.parse(str(rec["metric"])),
            value=float(rec["value"]),
            example_count=int(rec.get("examples", 0)),
        )


@dataclass(frozen=True)
class RoundStats:
    """Spread of the per-round overall averages."""

    mean: float
    std: float
    median: float
    min: float
    max: float

    def to_record(self) -> dict:
        return {
            "mean": self.mean,
            "std": self.std,
            "median": self.median,
            "min": self.min,
            "max": self.max,
        }


@dataclass(frozen=True)
class AggregateReport:
    """Per-task means/stds over rounds plus overall round statistics."""

    per_task: dict[str, tuple[float, float]]  # task -> (mean, std) over rounds
    round_overalls: dict[int, float]  # round -> unweighted mean across tasks
    stats: RoundStats
    metric: Metric


def evaluate_task(
    model: ModelHandle,
    eval_set: Sequence[Example],
    metric: Metric,
    backend: Backend,
    round_index: int = 0,
    max_batch: int | None = None,
) -> TaskScore:
    """Generate predictions for the whole eval set and score them."""
    if not eval_set:
        raise PreconditionError("eval set must be non-empty")
    for ex in eval_set:
        if not ex.output_text:
            raise PreconditionError(f"eval example {ex.example_id!r} has an empty truth")
    tasks = {ex.task_name for ex in eval_set}
    if len(tasks) != 1:
        raise PreconditionError(f"eval set mixes tasks: {sorted(tasks)}")

    predictions = backend.generate(model, [ex.input_text for ex in eval_set])
    score_fn = _METRIC_FN[metric]
    matches = sum(score_fn(pred, ex.output_text) for pred, ex in zip(predictions, eval_set))
    return TaskScore(
        task=next(iter(tasks)),
        round_index=round_index,
        metric=metric,
        value=100.0 * matches / len(eval_set),
        example_count=len(eval_set),
    )


def _sample_std(values: Sequence[float]) -> float:
    return statistics.stdev(values) if len(values) > 1 else 0.0


def aggregate_rounds(scores: Sequence[TaskScore]) -> AggregateReport:
    """Aggregate a full rounds-by-tasks grid of scores.

    Per-task mean and sample std over rounds; per-round overall is the
    unweighted mean across tasks; round statistics summarize the overalls.
    """
    if not scores:
        raise PreconditionError("no scores to aggregate")
    metrics = {s.metric for s in scores}
    if len(metrics) != 1:
        raise PreconditionError("cannot aggregate scores of mixed metrics")

    cells: dict[tuple[int, str], float] = {}
    for score in scores:
        key = (score.round_index, score.task)
        if key in cells:
            raise PreconditionError(f"duplicate score for round {key[0]}, task {key[1]!r}")
        cells[key] = score.value
    rounds = sorted({r for r, _ in cells})
    tasks = sorted({t for _, t in cells})
    for r in rounds:
        for t in tasks:
            if (r, t) not in cells:
                raise PreconditionError(f"missing score for round {r}, task {t!r}")

    per_task = {
        t: (
            statistics.fmean(cells[(r, t)] for r in rounds),
            _sample_std([cells[(r, t)] for r in rounds]),
        )
        for t in tasks
    }
    round_overalls = {r: statistics.fmean(cells[(r, t)] for t in tasks) for r in rounds}
    overalls = list(round_overalls.values())
    stats = RoundStats(
        mean=statistics.fmean(overalls),
        std=_sample_std(overalls),
        median=statistics.median(overalls),
        min=min(overalls),
        max=max(overalls),
    )
    return AggregateReport(
        per_task=per_task,
        round_overalls=round_overalls,
        stats=stats,
        metric=next(iter(metrics)),
    )


def retrieval_distribution(
    retrieved: CandidateList, corpus: ExampleCollection
) -> dict[str, float]:
    """Fraction of retrieved occurrences per upstream task (duplicates count)."""
    if len(retrieved) == 0:
        raise PreconditionError("empty retrieval has no distribution")
    counts: dict[str, int] = {}
    for entry in retrieved:
        task = corpus.get(entry.example_id).task_name  # unknown ids raise here
        counts[task] = counts.get(task, 0) + 1
    total = len(retrieved)
    fractions = {task: count / total for task, count in sorted(counts.items())}
    assert math.isclose(sum(fractions.values()), 1.0, abs_tol=1e-9)
    return fractions
