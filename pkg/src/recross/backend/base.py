"""Model-backend contract: embedding, pair scoring, fine-tuning, loss, generation.

Every backend exposes the same six operations behind :class:`Backend`; the
engine stays agnostic to whether they run in-process or over HTTP.  All
backends pre-register the upstream multi-task model under the handle
``"base"``.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..corpus import Example
from ..errors import PreconditionError, ProtocolViolationError

PROTOCOL_VERSION = 1

#: Handle of the upstream multi-task model every backend pre-registers.
BASE_MODEL_ID = "base"

#: Max items per protocol request; batching is the engine's responsibility.
DEFAULT_MAX_BATCH = 64


@dataclass(frozen=True)
class ModelHandle:
    """Opaque name of a backend-side model state."""

    model_id: str

    def __post_init__(self) -> None:
        if not self.model_id:
            raise PreconditionError("model_id must be non-empty")


BASE_MODEL = ModelHandle(BASE_MODEL_ID)


@dataclass(frozen=True)
class FinetuneSpec:
    """Hyperparameters of one fine-tuning call."""

    learning_rate: float = 1e-6
    batch_size: int = 4
    epochs: int = 2

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise PreconditionError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise PreconditionError("batch_size and epochs must be positive integers")

    def to_dict(self) -> dict[str, float | int]:
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
        }


def candidate_scoring_text(example: Example) -> str:
    """Candidate-side text for pair scoring: input, newline, output.

    The query side always sends input text only (queries are unlabeled).
    """
    return f"{example.input_text}\n{example.output_text}"


class Backend(abc.ABC):
    """The six protocol operations plus the engine-side batch limit."""

    max_batch: int = DEFAULT_MAX_BATCH

    @abc.abstractmethod
    def encode(self, texts: Sequence[str]) -> np.ndarray:
        """Embed texts; returns a (len(texts), d) float32 array."""

    @abc.abstractmethod
    def score_pairs(
        self, model: ModelHandle, pairs: Sequence[tuple[str, str]]
    ) -> list[float]:
        """Score (query_text, candidate_text) pairs; each score in [0, 1]."""

    @abc.abstractmethod
    def finetune(
        self, parent: ModelHandle, train: Sequence[Example], spec: FinetuneSpec
    ) -> ModelHandle:
        """Fine-tune a copy of ``parent``; the parent handle stays usable."""

    @abc.abstractmethod
    def compute_loss(self, model: ModelHandle, held_out: Sequence[Example]) -> float:
        """Mean per-example loss on ``held_out``; lower is better."""

    @abc.abstractmethod
    def generate(self, model: ModelHandle, inputs: Sequence[str]) -> list[str]:
        """Generate one output string per input."""

    @abc.abstractmethod
    def train_pair_classifier(
        self, pairs: Sequence[tuple[str, str, int]]
    ) -> ModelHandle:
        """Train a pair classifier on labeled pairs; handle feeds score_pairs."""


def check_encode_inputs(texts: Sequence[str]) -> None:
    if not texts:
        raise PreconditionError("encode requires at least one text")


def check_embedding_block(block: np.ndarray, n_texts: int, dim: int | None) -> int:
    """Validate one encode response; returns the (possibly new) dimension."""
    if block.ndim != 2 or block.shape[0] != n_texts:
        raise ProtocolViolationError(
            f"encode returned shape {block.shape}, expected ({n_texts}, d)"
        )
    if dim is not None and block.shape[1] != dim:
        raise ProtocolViolationError(
            f"embedding dimension drifted from {dim} to {block.shape[1]}"
        )
    if not np.all(np.isfinite(block)):
        raise ProtocolViolationError("encode returned non-finite values")
    return int(block.shape[1])


def check_scores(scores: Sequence[float], n_pairs: int) -> list[float]:
    """Validate a score_pairs response: one score per pair, all in [0, 1]."""
    if len(scores) != n_pairs:
        raise ProtocolViolationError(
            f"score_pairs returned {len(scores)} scores for {n_pairs} pairs"
        )
    out = [float(s) for s in scores]
    for s in out:
        if not (0.0 <= s <= 1.0):
            raise ProtocolViolationError(f"pair score {s} outside [0, 1]")
    return out


def example_to_wire(ex: Example) -> dict[str, str]:
    return ex.to_record()


def example_from_wire(record: dict[str, str]) -> Example:
    return Example(
        example_id=record["id"],
        task_name=record["task"],
        input_text=record["input"],
        output_text=record.get("output", ""),
    )
