"""Distant-supervision mining for reranker training.

For one upstream task acting as a stand-in unseen task: sample a query set
and a larger held-out set from it, dense-retrieve a candidate pool, drop
everything from the query task, then repeatedly shuffle the pool into
groups, fine-tune a copy of the model on each group, and score every group
member with the held-out loss.  The lowest mean losses become positives,
the highest become negatives, and query/positive/negative pairs form the
labeled dataset for training the pair classifier.
"""

from __future__ import annotations

import hashlib
import json
import random
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .backend.base import BASE_MODEL, Backend, FinetuneSpec, ModelHandle, candidate_scoring_text
from .corpus import Example, ExampleCollection, QuerySet
from .errors import PoolTooSmallError, PreconditionError
from .index import DenseIndex
from .retrieve import retrieve


@dataclass(frozen=True)
class MinerParams:
    """Knobs of one mining run; sizes are checked against the actual pool."""

    query_size: int = 16
    holdout_size: int = 64
    pool_size: int = 256
    rounds: int = 8
    group_count: int = 8
    selection_size: int = 32
    finetune: FinetuneSpec = field(default_factory=FinetuneSpec)
    rng_seed: int = 0

    def __post_init__(self) -> None:
        for name in ("query_size", "holdout_size", "pool_size", "rounds", "group_count", "selection_size"):
            if getattr(self, name) < 1:
                raise PreconditionError(f"{name} must be a positive integer")


@dataclass(frozen=True)
class DistantSupervisionTuple:
    """Mined (queries, positives, negatives) with per-example mean losses."""

    query_task: str
    queries: tuple[Example, ...]
    positives: tuple[Example, ...]
    negatives: tuple[Example, ...]
    mean_losses: dict[str, float]  # example_id -> mean held-out loss (lower = better)

    def to_record(self) -> dict:
        return {
            "query_task": self.query_task,
            "query_ids": [ex.example_id for ex in self.queries],
            "positive_ids": [ex.example_id for ex in self.positives],
            "negative_ids": [ex.example_id for ex in self.negatives],
            "mean_losses": {k: self.mean_losses[k] for k in sorted(self.mean_losses)},
        }


@dataclass
class MiningTrace:
    """Everything a test needs to recompute the scores independently."""

    pool_ids: list[str]
    round_groups: list[list[list[str]]]  # [round][group] -> member ids
    group_losses: list[list[float]]  # [round][group] -> held-out loss
    score_lists: dict[str, list[float]]  # example_id -> one loss per round
    mean_scores: dict[str, float]
    sorted_ids: list[str]  # pool ids by increasing mean loss


def _split_groups(items: list[Example], group_count: int) -> list[list[Example]]:
    """Partition into ``group_count`` contiguous groups, sizes differing by <= 1."""
    n = len(items)
    base, extra = divmod(n, group_count)
    groups = []
    start = 0
    for g in range(group_count):
        size = base + (1 if g < extra else 0)
        groups.append(items[start : start + size])
        start += size
    return groups


def derive_seed(seed: int, *parts: str) -> int:
    """Stable 64-bit sub-seed from a master seed and string labels."""
    h = hashlib.blake2b(digest_size=8)
    h.update(struct.pack("<Q", seed & 0xFFFFFFFFFFFFFFFF))
    for part in parts:
        data = part.encode("utf-8")
        h.update(struct.pack("<q", len(data)))
        h.update(data)
    return int.from_bytes(h.digest(), "little")


def mine_tuple(
    corpus: ExampleCollection,
    index: DenseIndex,
    query_task: str,
    params: MinerParams,
    backend: Backend,
    model: ModelHandle = BASE_MODEL,
    return_trace: bool = False,
) -> DistantSupervisionTuple | tuple[DistantSupervisionTuple, MiningTrace]:
    """Mine one (queries, positives, negatives) tuple for ``query_task``."""
    task_examples = corpus.task_examples(query_task)
    needed = params.query_size + params.holdout_size
    if len(task_examples) < needed:
        raise PreconditionError(
            f"task {query_task!r} has {len(task_examples)} examples, "
            f"needs {needed} for disjoint query and held-out sets"
        )

    rng = random.Random(derive_seed(params.rng_seed, "mine", query_task))
    picks = rng.sample(range(len(task_examples)), needed)
    query_examples = [task_examples[i] for i in picks[: params.query_size]]
    held_out = [task_examples[i] for i in picks[params.query_size :]]

    candidates = retrieve(
        index,
        QuerySet(query_task, query_examples),
        size=params.pool_size,
        backend=backend,
    )
    # The pool is a set: collapse duplicate hits, then discard everything
    # from the query task itself.
    pool = [
        corpus.get(cid)
        for cid in candidates.distinct_ids()
        if corpus.get(cid).task_name != query_task
    ]
    if len(pool) < 2 * params.selection_size:
        raise PoolTooSmallError(
            f"post-discard pool has {len(pool)} examples, needs at least "
            f"{2 * params.selection_size} to fill both selection sets"
        )
    if params.group_count > len(pool):
        raise PreconditionError(
            f"group_count {params.group_count} exceeds the pool size {len(pool)}"
        )

    score_lists: dict[str, list[float]] = {ex.example_id: [] for ex in pool}
    trace = MiningTrace(
        pool_ids=[ex.example_id for ex in pool],
        round_groups=[],
        group_losses=[],
        score_lists=score_lists,
        mean_scores={},
        sorted_ids=[],
    )

    order = list(pool)
    for _ in range(params.rounds):
        rng.shuffle(order)
        groups = _split_groups(order, params.group_count)
        round_losses = []
        for group in groups:
            tuned = backend.finetune(model, group, params.finetune)
            loss = backend.compute_loss(tuned, held_out)
            round_losses.append(loss)
            for member in group:
                score_lists[member.example_id].append(loss)
        trace.round_groups.append([[ex.example_id for ex in g] for g in groups])
        trace.group_losses.append(round_losses)

    mean_scores = {eid: sum(losses) / len(losses) for eid, losses in score_lists.items()}
    # Stable sort by increasing mean loss; ties keep the last shuffle order.
    order.sort(key=lambda ex: mean_scores[ex.example_id])
    positives = order[: params.selection_size]
    negatives = order[-params.selection_size :]

    trace.mean_scores = mean_scores
    trace.sorted_ids = [ex.example_id for ex in order]

    selected = positives + negatives
    result = DistantSupervisionTuple(
        query_task=query_task,
        queries=tuple(query_examples),
        positives=tuple(positives),
        negatives=tuple(negatives),
        mean_losses={ex.example_id: mean_scores[ex.example_id] for ex in selected},
    )
    return (result, trace) if return_trace else result


def build_pair_dataset(
    tuples: Sequence[DistantSupervisionTuple],
) -> list[tuple[str, str, int]]:
    """Expand tuples into labeled (query_text, candidate_text, label) rows.

    Every query pairs with every positive (label 1) and every negative
    (label 0); candidates serialize as input text, newline, output text.
    """
    if not tuples:
        raise PreconditionError("no tuples to build pairs from")
    rows: list[tuple[str, str, int]] = []
    for tup in tuples:
        for query in tup.queries:
            for pos in tup.positives:
                rows.append((query.input_text, candidate_scoring_text(pos), 1))
        for query in tup.queries:
            for neg in tup.negatives:
                rows.append((query.input_text, candidate_scoring_text(neg), 0))
    return rows


def save_tuples(tuples: Sequence[DistantSupervisionTuple], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for tup in tuples:
            fh.write(json.dumps(tup.to_record(), ensure_ascii=False) + "\n")


def load_tuples(path: str | Path, corpus: ExampleCollection) -> list[DistantSupervisionTuple]:
    """Rehydrate tuples saved by :func:`save_tuples`, resolving ids in ``corpus``."""
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            out.append(
                DistantSupervisionTuple(
                    query_task=rec["query_task"],
                    queries=tuple(corpus.get(i) for i in rec["query_ids"]),
                    positives=tuple(corpus.get(i) for i in rec["positive_ids"]),
                    negatives=tuple(corpus.get(i) for i in rec["negative_ids"]),
                    mean_losses={k: float(v) for k, v in rec["mean_losses"].items()},
                )
            )
    return out
