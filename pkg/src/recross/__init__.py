"""Retrieval augmentation engine for adapting multi-task models to unseen tasks.

Given a dense-indexed upstream corpus and a few unlabeled query examples of
an unseen task, the engine retrieves and reranks the most useful upstream
examples, mines distant supervision for training the reranker, briefly
fine-tunes the upstream model on the retrieved set, and evaluates the
result with seeded multi-round statistics.
"""

__version__ = "0.1.0"

from .backend import (
    BASE_MODEL,
    Backend,
    BuiltinBackend,
    FinetuneSpec,
    HttpBackend,
    ModelHandle,
)
from .config import RunConfig, load_run_config
from .corpus import (
    Example,
    ExampleCollection,
    QuerySet,
    filter_tasks,
    load_corpus,
    save_corpus,
)
from .evaluation import (
    Metric,
    RoundStats,
    TaskScore,
    aggregate_rounds,
    evaluate_task,
    exact_match,
    retrieval_distribution,
    soft_em,
)
from .index import DenseIndex, SearchHit, build_index, load_index, save_index
from .mining import (
    DistantSupervisionTuple,
    MinerParams,
    build_pair_dataset,
    mine_tuple,
)
from .pipeline import RunMode, run_baseline, run_generalization, sample_query_rounds
from .rerank import ScoreMatrix, rerank, score_all
from .retrieve import CandidateEntry, CandidateList, retrieve, retrieve_filtered

__all__ = [
    "BASE_MODEL",
    "Backend",
    "BuiltinBackend",
    "CandidateEntry",
    "CandidateList",
    "DenseIndex",
    "DistantSupervisionTuple",
    "Example",
    "ExampleCollection",
    "FinetuneSpec",
    "HttpBackend",
    "Metric",
    "MinerParams",
    "ModelHandle",
    "QuerySet",
    "RoundStats",
    "RunConfig",
    "RunMode",
    "ScoreMatrix",
    "SearchHit",
    "TaskScore",
    "aggregate_rounds",
    "build_index",
    "build_pair_dataset",
    "evaluate_task",
    "exact_match",
    "filter_tasks",
    "load_corpus",
    "load_index",
    "load_run_config",
    "mine_tuple",
    "rerank",
    "retrieval_distribution",
    "retrieve",
    "retrieve_filtered",
    "run_baseline",
    "run_generalization",
    "sample_query_rounds",
    "save_corpus",
    "save_index",
    "score_all",
    "soft_em",
]
