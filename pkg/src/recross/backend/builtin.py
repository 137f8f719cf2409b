"""Deterministic in-process backend for tests, goldens, and dry runs.

Semantics (documented, not emergent):

* ``encode`` — seeded feature hashing of whitespace tokens into ``dim``
  buckets with a per-token sign, then the mean over tokens.
* ``score_pairs`` — |query tokens ∩ candidate tokens| / |query tokens|;
  the special pre-registered handle ``"constant-scorer"`` returns 0.5 for
  every pair instead.
* ``finetune`` — stores the mean hidden utility of the training set in the
  new model state.  An example's utility is the number after a
  ``utility=`` marker in its output text when present, otherwise a hash of
  its content mapped into [0, 1].
* ``compute_loss`` — ``1 - stored mean utility`` plus seeded Gaussian noise
  (sigma configurable, default 0.02), clamped at zero.  The noise is a pure
  function of (seed, model state, distinct held-out contents), so repeated
  calls agree and duplicated held-out examples do not change the value.
* ``generate`` — echoes each input unchanged, regardless of model state.
* ``train_pair_classifier`` — validates the labels and returns a fresh
  handle that scores exactly like the token-overlap scorer.

Every operation is a pure function of (seed, model state, inputs), and
handles are content-addressed, so whole pipeline runs replay bit-identically.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import struct
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..corpus import Example
from ..errors import ModelNotFoundError, PreconditionError
from .base import (
    BASE_MODEL_ID,
    Backend,
    FinetuneSpec,
    ModelHandle,
    check_encode_inputs,
)

CONSTANT_SCORER_ID = "constant-scorer"

_UTILITY_MARKER = re.compile(r"utility=([0-9]*\.?[0-9]+)")


def _digest(seed: int, *parts: str) -> bytes:
    h = hashlib.blake2b(digest_size=16)
    h.update(struct.pack("<Q", seed & 0xFFFFFFFFFFFFFFFF))
    for part in parts:
        data = part.encode("utf-8")
        h.update(struct.pack("<q", len(data)))
        h.update(data)
    return h.digest()


def _hash_u64(seed: int, *parts: str) -> int:
    return int.from_bytes(_digest(seed, *parts)[:8], "little")


def _hash_unit(seed: int, *parts: str) -> float:
    """Uniform value in [0, 1) derived from a hash; 53 bits of precision."""
    return (_hash_u64(seed, *parts) >> 11) / float(1 << 53)


def _hash_gauss(seed: int, *parts: str) -> float:
    """Standard normal sample derived from a hash (Box-Muller)."""
    u1 = _hash_unit(seed, "gauss-u1", *parts)
    u2 = _hash_unit(seed, "gauss-u2", *parts)
    # Guard u1 = 0, where log blows up.
    u1 = max(u1, 2.0 ** -53)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


@dataclass(frozen=True)
class _State:
    """One backend-side model state."""

    kind: str  # "seq2seq" | "overlap-scorer" | "constant-scorer"
    mean_utility: float
    content_hash: str


class BuiltinBackend(Backend):
    """The deterministic test backend; see module docstring for semantics.

    ``state_path`` optionally persists the model registry as JSON so
    handles created by one CLI invocation resolve in the next.
    """

    def __init__(
        self,
        seed: int = 0,
        dim: int = 64,
        noise_sigma: float = 0.02,
        state_path: str | Path | None = None,
    ):
        if dim < 1:
            raise PreconditionError("dim must be positive")
        self.seed = seed
        self.dim = dim
        self.noise_sigma = noise_sigma
        self._state_path = Path(state_path) if state_path else None
        self._lock = threading.Lock()
        self._registry: dict[str, _State] = {
            BASE_MODEL_ID: _State("seq2seq", 0.0, "base"),
            CONSTANT_SCORER_ID: _State("constant-scorer", 0.0, "constant"),
        }
        if self._state_path is not None and self._state_path.exists():
            self._load_state()

    # -- helpers ---------------------------------------------------------

    def _load_state(self) -> None:
        payload = json.loads(self._state_path.read_text(encoding="utf-8"))
        meta = payload.get("backend", {})
        if (meta.get("seed"), meta.get("dim"), meta.get("noise_sigma")) != (
            self.seed, self.dim, self.noise_sigma,
        ):
            raise PreconditionError(
                f"state file {self._state_path} was written by a backend with "
                f"different settings {meta}; use a matching --seed"
            )
        for model_id, rec in payload.get("models", {}).items():
            self._registry[model_id] = _State(
                rec["kind"], float(rec["mean_utility"]), rec["content_hash"]
            )

    def _save_state(self) -> None:
        payload = {
            "backend": {"seed": self.seed, "dim": self.dim, "noise_sigma": self.noise_sigma},
            "models": {
                model_id: {
                    "kind": s.kind,
                    "mean_utility": s.mean_utility,
                    "content_hash": s.content_hash,
                }
                for model_id, s in sorted(self._registry.items())
                if model_id not in (BASE_MODEL_ID, CONSTANT_SCORER_ID)
            },
        }
        self._state_path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")

    def _state(self, model: ModelHandle) -> _State:
        try:
            return self._registry[model.model_id]
        except KeyError:
            raise ModelNotFoundError(f"unknown model handle {model.model_id!r}") from None

    def _register(self, model_id: str, state: _State) -> ModelHandle:
        with self._lock:
            self._registry[model_id] = state
            if self._state_path is not None:
                self._save_state()
        return ModelHandle(model_id)

    def example_utility(self, ex: Example) -> float:
        """Hidden utility of an example under the synthetic training model."""
        match = _UTILITY_MARKER.search(ex.output_text)
        if match:
            return min(1.0, max(0.0, float(match.group(1))))
        return _hash_unit(self.seed, "utility", ex.input_text, ex.output_text)

    @staticmethod
    def _content_fingerprint(examples: Iterable[Example]) -> str:
        # Distinct contents only: repeating an example must not move the hash.
        parts = sorted({f"{ex.input_text}\n{ex.output_text}" for ex in examples})
        h = hashlib.blake2b(digest_size=16)
        for part in parts:
            data = part.encode("utf-8")
            h.update(struct.pack("<q", len(data)))
            h.update(data)
        return h.hexdigest()

    # -- protocol operations ----------------------------------------------

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        check_encode_inputs(texts)
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            tokens = text.split()
            if not tokens:
                continue  # stays a zero row; index build rejects it by id
            for token in tokens:
                h = _hash_u64(self.seed, "embed", token)
                bucket = (h >> 1) % self.dim
                sign = 1.0 if h & 1 else -1.0
                out[row, bucket] += sign
            out[row] /= len(tokens)
        return out.astype(np.float32)

    def score_pairs(
        self, model: ModelHandle, pairs: Sequence[tuple[str, str]]
    ) -> list[float]:
        state = self._state(model)
        if not pairs:
            raise PreconditionError("score_pairs requires at least one pair")
        if state.kind == "constant-scorer":
            return [0.5] * len(pairs)
        scores = []
        for query_text, candidate_text in pairs:
            query_tokens = set(query_text.split())
            if not query_tokens:
                scores.append(0.0)
                continue
            overlap = len(query_tokens & set(candidate_text.split()))
            scores.append(overlap / len(query_tokens))
        return scores

    def finetune(
        self, parent: ModelHandle, train: Sequence[Example], spec: FinetuneSpec
    ) -> ModelHandle:
        parent_state = self._state(parent)
        if not train:
            raise PreconditionError("finetune requires a non-empty training set")
        for ex in train:
            if not ex.output_text:
                raise PreconditionError(
                    f"finetune training example {ex.example_id!r} has empty output_text"
                )
        mean_utility = float(np.mean([self.example_utility(ex) for ex in train]))
        train_fp = self._content_fingerprint(train)
        content = _digest(
            self.seed,
            "finetune",
            parent_state.content_hash,
            train_fp,
            repr(spec.to_dict()),
        ).hex()
        model_id = f"ft-{content[:16]}"
        self._register(model_id, _State("seq2seq", mean_utility, content))
        return ModelHandle(model_id)

    def compute_loss(self, model: ModelHandle, held_out: Sequence[Example]) -> float:
        state = self._state(model)
        if not held_out:
            raise PreconditionError("compute_loss requires a non-empty held-out set")
        for ex in held_out:
            if not ex.output_text:
                raise PreconditionError(
                    f"held-out example {ex.example_id!r} has empty output_text"
                )
        noise = self.noise_sigma * _hash_gauss(
            self.seed, "loss", state.content_hash, self._content_fingerprint(held_out)
        )
        return max(0.0, 1.0 - state.mean_utility + noise)

    def generate(self, model: ModelHandle, inputs: Sequence[str]) -> list[str]:
        self._state(model)
        if not inputs:
            raise PreconditionError("generate requires at least one input")
        return list(inputs)

    def train_pair_classifier(
        self, pairs: Sequence[tuple[str, str, int]]
    ) -> ModelHandle:
        if not pairs:
            raise PreconditionError("train_pair_classifier requires pairs")
        labels = {label for _, _, label in pairs}
        if not labels <= {0, 1}:
            raise PreconditionError(f"labels must be 0 or 1, got {sorted(labels)}")
        if len(labels) < 2:
            raise PreconditionError("training pairs must contain both labels")
        content = _digest(
            self.seed,
            "pair-classifier",
            *[f"{q}\x1f{c}\x1f{label}" for q, c, label in pairs],
        ).hex()
        model_id = f"clf-{content[:16]}"
        self._register(model_id, _State("overlap-scorer", 0.0, content))
        return ModelHandle(model_id)
