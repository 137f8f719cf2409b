"""Command-line interface for the retrieval-augmentation engine.

Verbs: build-index, retrieve, rerank, mine, build-pairs, train-reranker,
relearn, evaluate, run, report, serve.  The backend defaults to the
deterministic builtin one; point at a protocol server with --backend-url
or the RECROSS_BACKEND_URL environment variable.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .backend import BASE_MODEL, Backend, BuiltinBackend, FinetuneSpec, HttpBackend, ModelHandle, serve
from .config import RunConfig, load_run_config, parse_key_values
from .corpus import filter_tasks, load_corpus, load_query_sets
from .errors import RecrossError
from .evaluation import Metric, TaskScore, aggregate_rounds, evaluate_task
from .index import build_index, load_index, save_index
from .mining import MinerParams, build_pair_dataset, load_tuples, mine_tuple, save_tuples
from .pipeline import RunMode, run_generalization, sample_query_rounds
from .rerank import rerank, score_all
from .report import read_distribution_csv, write_report
from .retrieve import load_candidates, retrieve_filtered, save_candidates

logger = logging.getLogger(__name__)

ENV_BACKEND_URL = "RECROSS_BACKEND_URL"


def _split_tasks(value: str | None) -> frozenset[str]:
    if not value:
        return frozenset()
    return frozenset(t.strip() for t in value.split(",") if t.strip())


def make_backend(args: argparse.Namespace, config: RunConfig) -> Backend:
    """Resolve the backend: explicit URL > explicit builtin > env URL > builtin."""
    if args.backend_url:
        return HttpBackend(args.backend_url, max_batch=args.max_batch)
    state = getattr(args, "backend_state", None)
    if args.backend == "builtin":
        return BuiltinBackend(seed=_seed(args, config), state_path=state)
    env_url = os.environ.get(ENV_BACKEND_URL)
    if env_url:
        return HttpBackend(env_url, max_batch=args.max_batch)
    return BuiltinBackend(seed=_seed(args, config), state_path=state)


def _seed(args: argparse.Namespace, config: RunConfig) -> int:
    return args.seed if args.seed is not None else config.rng_seed


def _config(args: argparse.Namespace) -> RunConfig:
    config = load_run_config(args.config)
    if args.seed is not None:
        config = config.override(rng_seed=args.seed)
    return config


def _out_path(args: argparse.Namespace, name: str) -> Path:
    out = Path(args.out) if getattr(args, "out", None) else Path(args.out_dir or ".") / name
    out.parent.mkdir(parents=True, exist_ok=True)
    return out


def cmd_build_index(args: argparse.Namespace) -> int:
    config = _config(args)
    backend = make_backend(args, config)
    corpus = load_corpus(args.corpus)
    excluded = _split_tasks(args.exclude) | config.excluded_tasks
    if excluded:
        corpus = filter_tasks(corpus, excluded)
    index = build_index(corpus, backend)
    save_index(index, args.out)
    print(f"indexed {len(index)} examples (dim {index.dim}) -> {args.out}")
    return 0


def cmd_retrieve(args: argparse.Namespace) -> int:
    config = _config(args)
    backend = make_backend(args, config)
    index = load_index(args.index)
    query_sets = load_query_sets(args.queries)
    if len(query_sets) != 1:
        raise RecrossError(
            f"queries file holds {len(query_sets)} tasks; retrieve expects exactly one"
        )
    candidates = retrieve_filtered(
        index, query_sets[0], args.size, _split_tasks(args.exclude), backend
    )
    save_candidates(candidates, args.out)
    note = " (underfilled)" if candidates.underfilled else ""
    print(f"retrieved {len(candidates)} candidates{note} -> {args.out}")
    return 0


def cmd_rerank(args: argparse.Namespace) -> int:
    config = _config(args)
    backend = make_backend(args, config)
    corpus = load_corpus(args.corpus)
    candidates = load_candidates(args.candidates)
    query_sets = load_query_sets(args.queries)
    if len(query_sets) != 1:
        raise RecrossError("rerank expects a single-task queries file")
    matrix = score_all(query_sets[0], candidates, corpus, ModelHandle(args.scorer), backend)
    final = rerank(matrix, candidates, args.final_size)
    save_candidates(final, args.out)
    print(f"reranked {len(candidates)} -> kept {len(final)} -> {args.out}")
    return 0


def _miner_params(path: str | None, seed: int | None) -> MinerParams:
    values: dict[str, object] = {}
    if path:
        raw = parse_key_values(Path(path).read_text(encoding="utf-8"))
        spec_keys = {"learning_rate": float, "batch_size": int, "epochs": int}
        spec_kwargs = {}
        for key, value in raw.items():
            if key in spec_keys:
                spec_kwargs[key] = spec_keys[key](value)
            elif key in ("query_size", "holdout_size", "pool_size", "rounds", "group_count", "selection_size", "rng_seed"):
                values[key] = int(value)
            else:
                raise RecrossError(f"unknown miner param {key!r}")
        if spec_kwargs:
            values["finetune"] = FinetuneSpec(**spec_kwargs)
    if seed is not None:
        values["rng_seed"] = seed
    return MinerParams(**values)  # type: ignore[arg-type]


def cmd_mine(args: argparse.Namespace) -> int:
    config = _config(args)
    backend = make_backend(args, config)
    corpus = load_corpus(args.corpus)
    index = load_index(args.index)
    params = _miner_params(args.params, args.seed)
    tasks = [t.strip() for t in args.tasks.split(",") if t.strip()]
    tuples = [
        mine_tuple(corpus, index, task, params, backend, model=ModelHandle(args.model))
        for task in tasks
    ]
    save_tuples(tuples, args.out)
    print(f"mined {len(tuples)} tuples -> {args.out}")
    return 0


def cmd_build_pairs(args: argparse.Namespace) -> int:
    corpus = load_corpus(args.corpus)
    tuples = load_tuples(args.tuples, corpus)
    rows = build_pair_dataset(tuples)
    with Path(args.out).open("w", encoding="utf-8") as fh:
        for query_text, candidate_text, label in rows:
            fh.write(
                json.dumps(
                    {"query_text": query_text, "candidate_text": candidate_text, "label": label},
                    ensure_ascii=False,
                )
                + "\n"
            )
    positives = sum(1 for _, _, label in rows if label == 1)
    print(f"wrote {len(rows)} pairs ({positives} positive) -> {args.out}")
    return 0


def cmd_train_reranker(args: argparse.Namespace) -> int:
    config = _config(args)
    backend = make_backend(args, config)
    pairs = []
    with Path(args.pairs).open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                pairs.append((rec["query_text"], rec["candidate_text"], int(rec["label"])))
    handle = backend.train_pair_classifier(pairs)
    if args.out:
        Path(args.out).write_text(json.dumps({"model_id": handle.model_id}) + "\n", encoding="utf-8")
    print(f"trained pair classifier: {handle.model_id}")
    return 0


def cmd_relearn(args: argparse.Namespace) -> int:
    config = _config(args)
    backend = make_backend(args, config)
    corpus = load_corpus(args.corpus)
    retrieved = load_candidates(args.retrieved)
    train = [corpus.get(entry.example_id) for entry in retrieved]
    spec = FinetuneSpec(
        learning_rate=config.finetune_lr,
        batch_size=config.finetune_batch,
        epochs=config.finetune_epochs,
    )
    handle = backend.finetune(ModelHandle(args.model), train, spec)
    if args.out:
        Path(args.out).write_text(json.dumps({"model_id": handle.model_id}) + "\n", encoding="utf-8")
    print(f"fine-tuned {args.model} on {len(train)} examples: {handle.model_id}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = _config(args)
    backend = make_backend(args, config)
    eval_corpus = load_corpus(args.eval)
    metric = Metric.parse(args.metric)
    scores = [
        evaluate_task(ModelHandle(args.model), eval_corpus.task_examples(task), metric, backend)
        for task in eval_corpus.task_names
    ]
    payload = {"scores": [s.to_record() for s in scores]}
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    for score in scores:
        print(f"{score.task}: {metric.value} = {score.value:.2f} ({score.example_count} examples)")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    config = _config(args).override(
        query_size=args.query_size,
        final_size=args.final_size,
        upsample_ratio=args.upsample_ratio,
        finetune_lr=args.lr,
        finetune_batch=args.batch,
        finetune_epochs=args.epochs,
    )
    if args.exclude:
        config = config.override(excluded_tasks=_split_tasks(args.exclude))
    backend = make_backend(args, config)
    mode = RunMode.parse(args.mode)
    metric = Metric.parse(args.metric)

    corpus = load_corpus(args.corpus)
    if config.excluded_tasks:
        corpus = filter_tasks(corpus, config.excluded_tasks)
    index = None
    if mode is RunMode.FULL:
        if args.index:
            index = load_index(args.index)
        else:
            index = build_index(corpus, backend)

    pool = load_corpus(args.query_pool)
    eval_corpus = load_corpus(args.eval)
    tasks = [t for t in pool.task_names if t in eval_corpus.by_task]
    if not tasks:
        raise RecrossError("no task appears in both the query pool and the eval file")
    query_rounds = sample_query_rounds(pool, tasks, args.rounds, config.query_size, config.rng_seed)
    eval_sets = {task: eval_corpus.task_examples(task) for task in tasks}

    out_dir = Path(args.out_dir or "run-output")
    result = run_generalization(
        corpus=corpus,
        index=index,
        query_rounds=query_rounds,
        eval_sets=eval_sets,
        config=config,
        backend=backend,
        metric=metric,
        mode=mode,
        scorer=ModelHandle(args.scorer),
        out_dir=out_dir,
    )
    scores_path = out_dir / "scores.json"
    scores_path.write_text(
        json.dumps({"scores": [s.to_record() for s in result.scores]}, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    if result.aggregate is not None:
        stats = result.aggregate.stats
        print(
            f"overall {metric.value}: mean {stats.mean:.2f}  std {stats.std:.2f}  "
            f"median {stats.median:.2f}  min {stats.min:.2f}  max {stats.max:.2f}"
        )
    if result.manifest["partial"]:
        print(f"warning: rounds {result.manifest['failed_rounds']} failed; report is partial")
    print(f"run artifacts and report -> {out_dir}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    payload = json.loads(Path(args.scores).read_text(encoding="utf-8"))
    records = payload["scores"] if isinstance(payload, dict) else payload
    scores = [TaskScore.from_record(rec) for rec in records]
    aggregate = aggregate_rounds(scores)
    distribution = read_distribution_csv(Path(args.distribution)) if args.distribution else None
    out_dir = Path(args.out_dir or "report")
    written = write_report(scores, aggregate, distribution, out_dir)
    stats = aggregate.stats
    print(
        f"overall {aggregate.metric.value}: mean {stats.mean:.2f}  std {stats.std:.2f}  "
        f"median {stats.median:.2f}  min {stats.min:.2f}  max {stats.max:.2f}"
    )
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    config = _config(args)
    backend = BuiltinBackend(seed=_seed(args, config))
    print(f"serving builtin backend (seed {_seed(args, config)}) on {args.host}:{args.port}")
    serve(backend, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="recross",
        description="Retrieval augmentation engine: retrieve, rerank, re-learn, evaluate",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", type=str, default=None, help="key=value run config file")
    parser.add_argument("--backend", choices=["builtin"], default=None, help="use the builtin backend")
    parser.add_argument("--backend-url", type=str, default=None, help="backend protocol server URL")
    parser.add_argument(
        "--backend-state", type=str, default=None,
        help="state file for the builtin backend, so model handles persist across invocations",
    )
    parser.add_argument("--max-batch", type=int, default=64, help="max items per backend request")
    parser.add_argument("--seed", type=int, default=None, help="override the config rng_seed")
    parser.add_argument("--out-dir", type=str, default=None, help="default output directory")
    parser.add_argument("-v", "--verbose", action="store_true")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-index", help="embed a corpus and write the dense index")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--exclude", default=None, help="comma-separated tasks to leave out")
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("retrieve", help="dense-retrieve candidates for a query set")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--exclude", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("rerank", help="score and rerank retrieved candidates")
    p.add_argument("--candidates", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--scorer", default=BASE_MODEL.model_id)
    p.add_argument("--final-size", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser("mine", help="mine distant-supervision tuples")
    p.add_argument("--corpus", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--tasks", required=True, help="comma-separated query tasks")
    p.add_argument("--params", default=None, help="key=value miner params file")
    p.add_argument("--model", default=BASE_MODEL.model_id)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("build-pairs", help="expand tuples into classifier training rows")
    p.add_argument("--tuples", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_pairs)

    p = sub.add_parser("train-reranker", help="train the pair classifier on mined pairs")
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_train_reranker)

    p = sub.add_parser("relearn", help="fine-tune a model on retrieved examples")
    p.add_argument("--corpus", required=True)
    p.add_argument("--retrieved", required=True)
    p.add_argument("--model", default=BASE_MODEL.model_id)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_relearn)

    p = sub.add_parser("evaluate", help="evaluate a model on labeled eval data")
    p.add_argument("--model", required=True)
    p.add_argument("--eval", required=True)
    p.add_argument("--metric", default="softem", help="softem or em")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", help="full pipeline: retrieve, rerank, re-learn, evaluate")
    p.add_argument("--corpus", required=True)
    p.add_argument("--index", default=None, help="prebuilt index (built on the fly when omitted)")
    p.add_argument("--query-pool", required=True, help="unlabeled pool to sample query sets from")
    p.add_argument("--eval", required=True, help="labeled held-out data per target task")
    p.add_argument("--rounds", type=int, default=5)
    p.add_argument("--metric", default="softem")
    p.add_argument("--mode", default="full", help="full, zero-shot, or random")
    p.add_argument("--scorer", default=BASE_MODEL.model_id)
    p.add_argument("--query-size", type=int, default=None)
    p.add_argument("--final-size", type=int, default=None)
    p.add_argument("--upsample-ratio", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--exclude", default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="render tables and figures from a scores file")
    p.add_argument("--scores", required=True)
    p.add_argument("--distribution", default=None, help="distribution CSV from a run")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="serve the builtin backend over HTTP")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8642)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (RecrossError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
