"""Adapter service: checkpoint registry plus the six protocol operations.

Model handles are content hashes of (parent, training data, spec, seed),
so repeating a fine-tune is idempotent and reruns resolve to the same
checkpoint.  Fine-tunes and classifier training run under a lock; read
operations are concurrent.
"""

from __future__ import annotations

import hashlib
import json
import random
import threading
from dataclasses import dataclass
from pathlib import Path

import torch

from .model import PairClassifier, TinySeq2Seq

BASE_MODEL_ID = "base"


class AdapterError(Exception):
    kind = "transport"


class NotFoundError(AdapterError):
    kind = "not_found"


class PreconditionError(AdapterError):
    kind = "precondition"


@dataclass(frozen=True)
class ExampleRecord:
    example_id: str
    task_name: str
    input_text: str
    output_text: str

    @classmethod
    def from_wire(cls, rec: dict) -> "ExampleRecord":
        return cls(
            example_id=str(rec.get("id", "")),
            task_name=str(rec.get("task", "")),
            input_text=str(rec.get("input", "")),
            output_text=str(rec.get("output", "")),
        )


def _fingerprint(*parts: str) -> str:
    h = hashlib.sha256()
    for part in parts:
        data = part.encode("utf-8")
        h.update(len(data).to_bytes(8, "little"))
        h.update(data)
    return h.hexdigest()[:16]


class AdapterService:
    """Owns the models and the on-disk checkpoint registry."""

    def __init__(self, registry_dir: str | Path, seed: int = 0, device: str = "cpu"):
        self.registry_dir = Path(registry_dir)
        self.registry_dir.mkdir(parents=True, exist_ok=True)
        self.seed = seed
        self.device = device
        self._train_lock = threading.Lock()
        self._cache: dict[str, torch.nn.Module] = {}
        self._cache_lock = threading.Lock()

        base = TinySeq2Seq(seed=seed).to(device).eval()
        self._cache[BASE_MODEL_ID] = base
        self._base_classifier = PairClassifier(seed=seed).to(device).eval()
        self._cache["base-classifier"] = self._base_classifier
        self.dim = base.embed_texts(["probe"]).shape[1]

    # -- registry ---------------------------------------------------------

    def _checkpoint_path(self, model_id: str) -> Path:
        return self.registry_dir / f"{model_id}.pt"

    def _load(self, model_id: str) -> torch.nn.Module:
        with self._cache_lock:
            if model_id in self._cache:
                return self._cache[model_id]
        path = self._checkpoint_path(model_id)
        if not path.exists():
            raise NotFoundError(f"unknown model handle {model_id!r}")
        payload = torch.load(path, map_location=self.device, weights_only=True)
        kind = payload.get("kind", "seq2seq")
        model: torch.nn.Module
        if kind == "classifier":
            model = PairClassifier(seed=self.seed)
        else:
            model = TinySeq2Seq(seed=self.seed)
        model.load_state_dict(payload["state"])
        model.to(self.device).eval()
        with self._cache_lock:
            self._cache[model_id] = model
        return model

    def _store(self, model_id: str, model: torch.nn.Module, kind: str) -> None:
        path = self._checkpoint_path(model_id)
        if not path.exists():
            torch.save({"kind": kind, "state": model.state_dict()}, path)
        with self._cache_lock:
            self._cache[model_id] = model

    def _seq2seq(self, model_id: str) -> TinySeq2Seq:
        model = self._load(model_id)
        if not isinstance(model, TinySeq2Seq):
            raise PreconditionError(f"model {model_id!r} is not a sequence model")
        return model

    # -- operations ---------------------------------------------------------

    def encode(self, texts: list[str]) -> list[list[float]]:
        if not texts:
            raise PreconditionError("encode requires at least one text")
        vectors = self._cache[BASE_MODEL_ID].embed_texts(texts)
        return vectors.tolist()

    def score_pairs(self, model_id: str, pairs: list[tuple[str, str]]) -> list[float]:
        if not pairs:
            raise PreconditionError("score_pairs requires at least one pair")
        model = self._load(model_id) if model_id != BASE_MODEL_ID else self._base_classifier
        if isinstance(model, TinySeq2Seq):
            # Sequence handles delegate to the base pair classifier.
            model = self._base_classifier
        return model.confidences(pairs)

    def finetune(self, parent_id: str, examples: list[ExampleRecord], spec: dict) -> str:
        if not examples:
            raise PreconditionError("finetune requires a non-empty training set")
        for ex in examples:
            if not ex.output_text:
                raise PreconditionError(
                    f"training example {ex.example_id!r} has empty output_text"
                )
        parent = self._seq2seq(parent_id)
        lr = float(spec.get("learning_rate", 1e-6))
        batch_size = int(spec.get("batch_size", 4))
        epochs = int(spec.get("epochs", 2))
        if lr <= 0 or batch_size < 1 or epochs < 1:
            raise PreconditionError("invalid finetune spec")

        data_fp = _fingerprint(*(f"{ex.input_text}\x1f{ex.output_text}" for ex in examples))
        model_id = "ft-" + _fingerprint(parent_id, data_fp, json.dumps(spec, sort_keys=True), str(self.seed))
        if self._checkpoint_path(model_id).exists():
            return model_id  # idempotent per (parent, data, spec, seed)

        with self._train_lock:
            model = TinySeq2Seq(seed=self.seed)
            model.load_state_dict(parent.state_dict())
            model.to(self.device).train()
            optimizer = torch.optim.SGD(model.parameters(), lr=lr)
            order_rng = random.Random(int(model_id[3:11], 16))
            indices = list(range(len(examples)))
            for _ in range(epochs):
                order_rng.shuffle(indices)
                for start in range(0, len(indices), batch_size):
                    batch = [examples[i] for i in indices[start : start + batch_size]]
                    optimizer.zero_grad()
                    losses = model.sequence_losses(
                        [ex.input_text for ex in batch],
                        [ex.output_text for ex in batch],
                    )
                    losses.mean().backward()
                    optimizer.step()
            model.eval()
            self._store(model_id, model, "seq2seq")
        return model_id

    def compute_loss(self, model_id: str, examples: list[ExampleRecord]) -> float:
        if not examples:
            raise PreconditionError("compute_loss requires a non-empty held-out set")
        for ex in examples:
            if not ex.output_text:
                raise PreconditionError(
                    f"held-out example {ex.example_id!r} has empty output_text"
                )
        model = self._seq2seq(model_id)
        with torch.no_grad():
            losses = model.sequence_losses(
                [ex.input_text for ex in examples],
                [ex.output_text for ex in examples],
            )
        return float(losses.mean())

    def generate(self, model_id: str, inputs: list[str]) -> list[str]:
        if not inputs:
            raise PreconditionError("generate requires at least one input")
        return self._seq2seq(model_id).greedy_generate(inputs)

    def train_pair_classifier(self, pairs: list[tuple[str, str, int]]) -> str:
        if not pairs:
            raise PreconditionError("train_pair_classifier requires pairs")
        labels = {label for _, _, label in pairs}
        if not labels <= {0, 1}:
            raise PreconditionError(f"labels must be 0 or 1, got {sorted(labels)}")
        if len(labels) < 2:
            raise PreconditionError("training pairs must contain both labels")

        data_fp = _fingerprint(*(f"{q}\x1f{c}\x1f{label}" for q, c, label in pairs))
        model_id = "clf-" + _fingerprint(data_fp, str(self.seed))
        if self._checkpoint_path(model_id).exists():
            return model_id

        with self._train_lock:
            model = PairClassifier(seed=self.seed)
            model.load_state_dict(self._base_classifier.state_dict())
            model.to(self.device).train()
            optimizer = torch.optim.SGD(model.parameters(), lr=1e-2)
            targets = torch.tensor([float(label) for _, _, label in pairs], dtype=torch.float64)
            text_pairs = [(q, c) for q, c, _ in pairs]
            for _ in range(4):
                optimizer.zero_grad()
                logits = model.logits(text_pairs)
                loss = torch.nn.functional.binary_cross_entropy_with_logits(logits, targets)
                loss.backward()
                optimizer.step()
            model.eval()
            self._store(model_id, model, "classifier")
        return model_id
