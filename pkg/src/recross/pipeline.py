"""End-to-end orchestration: retrieve, rerank, re-learn, evaluate, aggregate.

A run executes one or more seeded rounds; each round retrieves candidates
for every target task's query set, reranks them, fine-tunes a copy of the
base model on the final retrieved set, and evaluates the tuned model on
that task's held-out data.  Every intermediate artifact is written under
the output directory and recorded in a manifest by content hash, so two
runs with the same config and seeds produce byte-identical outputs with a
deterministic backend.

Failures isolate per (round, task): the error is recorded in the manifest
and the remaining work proceeds.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .backend.base import BASE_MODEL, Backend, FinetuneSpec, ModelHandle
from .config import RunConfig
from .corpus import Example, ExampleCollection, QuerySet
from .errors import PreconditionError, RecrossError
from .evaluation import (
    AggregateReport,
    Metric,
    TaskScore,
    aggregate_rounds,
    evaluate_task,
    retrieval_distribution,
)
from .index import DenseIndex
from .mining import derive_seed
from .rerank import rerank, score_all
from .report import write_report
from .retrieve import CandidateEntry, CandidateList, retrieve_filtered

logger = logging.getLogger(__name__)


class RunMode(enum.Enum):
    FULL = "full"
    ZERO_SHOT = "zero-shot"
    RANDOM = "random"

    @classmethod
    def parse(cls, name: str) -> "RunMode":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise PreconditionError(
                f"unknown mode {name!r}; use full, zero-shot, or random"
            ) from None


@dataclass
class RunResult:
    scores: list[TaskScore]
    aggregate: AggregateReport | None
    distribution: list[tuple[str, str, float]]
    manifest: dict
    out_dir: Path | None


def sample_query_rounds(
    pool: ExampleCollection,
    tasks: Sequence[str],
    rounds: int,
    query_size: int,
    seed: int,
) -> list[list[QuerySet]]:
    """Draw disjoint per-round query sets for each task from an unlabeled pool."""
    if rounds < 1:
        raise PreconditionError("need at least one round")
    per_round: list[list[QuerySet]] = [[] for _ in range(rounds)]
    for task in tasks:
        examples = pool.task_examples(task)
        needed = rounds * query_size
        if len(examples) < needed:
            raise PreconditionError(
                f"query pool for task {task!r} has {len(examples)} examples, "
                f"needs {needed} for {rounds} disjoint rounds of {query_size}"
            )
        rng = random.Random(derive_seed(seed, "queries", task))
        picks = rng.sample(range(len(examples)), needed)
        for r in range(rounds):
            chunk = picks[r * query_size : (r + 1) * query_size]
            per_round[r].append(QuerySet(task, [examples[i] for i in chunk]))
    return per_round


def _slug(text: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in text)


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _candidates_bytes(candidates: CandidateList) -> bytes:
    lines = [json.dumps(e.to_record(), ensure_ascii=False) for e in candidates]
    return ("\n".join(lines) + "\n").encode("utf-8") if lines else b""


class _ArtifactStore:
    """Writes artifacts under out_dir (when given) and tracks their hashes."""

    def __init__(self, out_dir: Path | None):
        self.out_dir = out_dir
        self.hashes: dict[str, str] = {}

    def put(self, relpath: str, data: bytes) -> str:
        digest = _sha256(data)
        self.hashes[relpath] = digest
        if self.out_dir is not None:
            target = self.out_dir / relpath
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(data)
        return digest


def _finetune_spec(config: RunConfig) -> FinetuneSpec:
    return FinetuneSpec(
        learning_rate=config.finetune_lr,
        batch_size=config.finetune_batch,
        epochs=config.finetune_epochs,
    )


def _random_retrieval(
    corpus: ExampleCollection, size: int, round_seed: int, task: str
) -> CandidateList:
    """Uniform sample of the corpus, ignoring the queries entirely."""
    rng = random.Random(derive_seed(round_seed, "random-retrieval", task))
    take = min(size, len(corpus))
    picks = rng.sample(range(len(corpus)), take)
    entries = tuple(
        CandidateEntry(
            example_id=corpus[pos].example_id,
            task_name=corpus[pos].task_name,
            query_index=-1,
            rank=i,
            score=0.0,
        )
        for i, pos in enumerate(picks)
    )
    return CandidateList(entries=entries, underfilled=take < size)


def run_generalization(
    corpus: ExampleCollection,
    index: DenseIndex | None,
    query_rounds: Sequence[Sequence[QuerySet]],
    eval_sets: Mapping[str, Sequence[Example]],
    config: RunConfig,
    backend: Backend,
    metric: Metric = Metric.SOFT_EM,
    mode: RunMode = RunMode.FULL,
    scorer: ModelHandle = BASE_MODEL,
    base_model: ModelHandle = BASE_MODEL,
    out_dir: str | Path | None = None,
) -> RunResult:
    """Run the generalization protocol over all rounds and aggregate.

    ``index`` may be None only for the zero-shot and random baselines.
    """
    if not query_rounds:
        raise PreconditionError("need at least one round of query sets")
    if mode is RunMode.FULL and index is None:
        raise PreconditionError("the full pipeline needs a dense index")
    for round_sets in query_rounds:
        for qs in round_sets:
            if qs.target_task not in eval_sets:
                raise PreconditionError(f"no eval set for target task {qs.target_task!r}")

    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
    store = _ArtifactStore(out_path)

    round_seeds = [derive_seed(config.rng_seed, "round", str(r)) for r in range(len(query_rounds))]
    spec = _finetune_spec(config)

    scores: list[TaskScore] = []
    rounds_detail: list[dict] = []
    final_by_task: dict[str, list[CandidateEntry]] = {}

    for round_index, round_sets in enumerate(query_rounds):
        for task_ordinal, query_set in enumerate(round_sets):
            task = query_set.target_task
            detail: dict = {"round": round_index, "task": task, "status": "ok"}
            prefix = f"artifacts/round_{round_index:02d}/{task_ordinal:02d}_{_slug(task)}"
            try:
                if mode is RunMode.ZERO_SHOT:
                    model = base_model
                else:
                    if mode is RunMode.FULL:
                        candidates = retrieve_filtered(
                            index, query_set, config.candidate_size,
                            config.excluded_tasks, backend,
                        )
                        detail["candidates_file"] = f"{prefix}.candidates.jsonl"
                        detail["candidates_sha256"] = store.put(
                            detail["candidates_file"], _candidates_bytes(candidates)
                        )
                        matrix = score_all(query_set, candidates, corpus, scorer, backend)
                        final = rerank(matrix, candidates, config.final_size)
                    else:  # RANDOM: ignore the queries, sample uniformly
                        final = _random_retrieval(
                            corpus, config.final_size, round_seeds[round_index], task
                        )
                    detail["final_file"] = f"{prefix}.final.jsonl"
                    detail["final_sha256"] = store.put(
                        detail["final_file"], _candidates_bytes(final)
                    )
                    train = [corpus.get(e.example_id) for e in final]
                    model = backend.finetune(base_model, train, spec)
                    final_by_task.setdefault(task, []).extend(final.entries)

                detail["model_id"] = model.model_id
                score = evaluate_task(
                    model, eval_sets[task], metric, backend, round_index=round_index
                )
                detail["score"] = score.value
                scores.append(score)
            except RecrossError as exc:
                logger.warning("round %d task %r failed: %s", round_index, task, exc)
                detail["status"] = "error"
                detail["error"] = str(exc)
            rounds_detail.append(detail)

    failed_rounds = {d["round"] for d in rounds_detail if d["status"] == "error"}
    complete = [s for s in scores if s.round_index not in failed_rounds]
    aggregate = aggregate_rounds(complete) if complete else None

    distribution: list[tuple[str, str, float]] = []
    for task, entries in sorted(final_by_task.items()):
        fractions = retrieval_distribution(CandidateList(entries=tuple(entries)), corpus)
        distribution.extend((task, upstream, frac) for upstream, frac in fractions.items())

    manifest = {
        "mode": mode.value,
        "metric": metric.value,
        "config": config.to_dict(),
        "rounds": len(query_rounds),
        "round_seeds": round_seeds,
        "tasks": sorted({qs.target_task for rs in query_rounds for qs in rs}),
        "scorer": scorer.model_id,
        "base_model": base_model.model_id,
        "partial": bool(failed_rounds),
        "failed_rounds": sorted(failed_rounds),
        "rounds_detail": rounds_detail,
        "artifacts": dict(sorted(store.hashes.items())),
    }

    if out_path is not None:
        if aggregate is not None:
            report_files = write_report(complete, aggregate, distribution, out_path / "report")
            manifest["report_files"] = {
                str(p.relative_to(out_path)): _sha256(p.read_bytes()) for p in report_files
            }
        manifest_bytes = json.dumps(manifest, indent=2, sort_keys=True).encode("utf-8")
        (out_path / "manifest.json").write_bytes(manifest_bytes)

    return RunResult(
        scores=scores,
        aggregate=aggregate,
        distribution=distribution,
        manifest=manifest,
        out_dir=out_path,
    )


def run_baseline(
    mode: RunMode,
    corpus: ExampleCollection,
    query_rounds: Sequence[Sequence[QuerySet]],
    eval_sets: Mapping[str, Sequence[Example]],
    config: RunConfig,
    backend: Backend,
    metric: Metric = Metric.SOFT_EM,
    base_model: ModelHandle = BASE_MODEL,
    out_dir: str | Path | None = None,
) -> RunResult:
    """Zero-shot (frozen model) or random-retrieval baseline run."""
    if mode is RunMode.FULL:
        raise PreconditionError("run_baseline handles only the baseline modes")
    return run_generalization(
        corpus=corpus,
        index=None,
        query_rounds=query_rounds,
        eval_sets=eval_sets,
        config=config,
        backend=backend,
        metric=metric,
        mode=mode,
        base_model=base_model,
        out_dir=out_dir,
    )
