"""Black-box conformance checks any protocol backend must pass.

The checks cover response shapes, score ranges, the error taxonomy, and
handle lifecycle.  ``strict_determinism=False`` relaxes repeatability to
the same client instance (for backends whose framework cannot promise
cross-process bit-equality).
"""

from __future__ import annotations

import numpy as np

from ..corpus import Example
from ..errors import ModelNotFoundError, PreconditionError
from .base import BASE_MODEL, Backend, FinetuneSpec, ModelHandle


def _fixture_examples(n: int, task: str = "conformance") -> list[Example]:
    return [
        Example(
            example_id=f"{task}-{i:03d}",
            task_name=task,
            input_text=f"question {i} about item {i % 3}",
            output_text=f"answer {i}",
        )
        for i in range(n)
    ]


def check_backend(backend: Backend, strict_determinism: bool = True) -> None:
    """Run the full conformance suite; raises AssertionError on violation."""
    check_encode(backend, strict_determinism)
    check_score_pairs(backend)
    check_generate(backend)
    check_model_lifecycle(backend)
    check_error_taxonomy(backend)


def check_encode(backend: Backend, strict_determinism: bool = True) -> None:
    texts = ["alpha beta", "gamma", "alpha beta"]
    vectors = backend.encode(texts)
    assert vectors.shape[0] == len(texts), "encode must return one vector per text"
    assert vectors.ndim == 2 and vectors.shape[1] >= 1, "vectors must share one dimension"
    assert np.all(np.isfinite(vectors)), "embeddings must be finite"
    assert np.array_equal(vectors[0], vectors[2]), "identical texts must encode identically"
    again = backend.encode(texts)
    if strict_determinism:
        assert np.array_equal(vectors, again), "encode must be deterministic"
    else:
        assert np.allclose(vectors, again, atol=1e-6), "encode must be repeatable in-process"
    assert backend.encode(["solo"]).shape[1] == vectors.shape[1], "dimension must be stable"


def check_score_pairs(backend: Backend) -> None:
    pairs = [("a b c", "a b c"), ("a b", "x y"), ("q w e", "q z z")]
    scores = backend.score_pairs(BASE_MODEL, pairs)
    assert len(scores) == len(pairs), "one score per pair"
    assert all(0.0 <= s <= 1.0 for s in scores), f"scores outside [0,1]: {scores}"


def check_generate(backend: Backend) -> None:
    inputs = ["first input", "second input", "third input", "fourth input"]
    outputs = backend.generate(BASE_MODEL, inputs)
    assert len(outputs) == len(inputs), "one output per input"
    assert all(isinstance(o, str) for o in outputs)


def check_model_lifecycle(backend: Backend) -> None:
    train = _fixture_examples(8)
    spec = FinetuneSpec()
    child = backend.finetune(BASE_MODEL, train, spec)
    assert child.model_id != BASE_MODEL.model_id, "finetune must return a new handle"

    # Parent must remain usable after the copy is trained.
    parent_loss = backend.compute_loss(BASE_MODEL, train)
    child_loss = backend.compute_loss(child, train)
    assert parent_loss >= 0.0 and child_loss >= 0.0, "losses must be non-negative"

    repeat = backend.compute_loss(child, train)
    assert repeat == child_loss, "compute_loss must be repeatable for a fixed handle"

    pairs = [("a b", "a b", 1), ("a b", "x y", 0)]
    scorer = backend.train_pair_classifier(pairs)
    scores = backend.score_pairs(scorer, [("token one", "token two")])
    assert len(scores) == 1 and 0.0 <= scores[0] <= 1.0


def check_error_taxonomy(backend: Backend) -> None:
    bogus = ModelHandle("no-such-model-xyz")
    train = _fixture_examples(4)

    try:
        backend.compute_loss(bogus, train)
        raise AssertionError("compute_loss on a bogus handle must fail")
    except ModelNotFoundError:
        pass

    try:
        backend.finetune(BASE_MODEL, [], FinetuneSpec())
        raise AssertionError("finetune on an empty train set must fail")
    except PreconditionError:
        pass

    try:
        backend.generate(BASE_MODEL, [])
        raise AssertionError("generate on an empty input list must fail")
    except PreconditionError:
        pass

    try:
        backend.train_pair_classifier([("a", "b", 1), ("c", "d", 1)])
        raise AssertionError("single-class classifier training must fail")
    except PreconditionError:
        pass
