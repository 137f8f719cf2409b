"""HTTP client for the backend protocol.

Requests are JSON bodies carrying ``protocol_version``; error responses are
``{"error": {"kind": ..., "message": ...}}`` and are re-raised as the
matching exception type.  Batch-shaped calls (encode, score_pairs,
generate) are chunked client-side to ``max_batch`` items per request.
"""

from __future__ import annotations

from typing import Any, Sequence

import numpy as np
import requests

from ..corpus import Example
from ..errors import ERROR_KINDS, PreconditionError, ProtocolViolationError, TransportError
from .base import (
    DEFAULT_MAX_BATCH,
    PROTOCOL_VERSION,
    Backend,
    FinetuneSpec,
    ModelHandle,
    check_embedding_block,
    check_encode_inputs,
    check_scores,
    example_to_wire,
)


def _chunks(items: Sequence, size: int):
    for start in range(0, len(items), size):
        yield items[start : start + size]


class HttpBackend(Backend):
    """Backend client speaking the JSON-over-HTTP protocol."""

    def __init__(
        self,
        base_url: str,
        max_batch: int = DEFAULT_MAX_BATCH,
        timeout: float = 600.0,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.max_batch = max_batch
        self.timeout = timeout
        self._session = session or requests.Session()
        self._dim: int | None = None

    def _post(self, endpoint: str, payload: dict[str, Any]) -> dict[str, Any]:
        payload = {"protocol_version": PROTOCOL_VERSION, **payload}
        try:
            response = self._session.post(
                f"{self.base_url}{endpoint}", json=payload, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise TransportError(f"backend unreachable at {self.base_url}: {exc}") from exc
        try:
            body = response.json()
        except ValueError as exc:
            raise TransportError(
                f"{endpoint}: non-JSON response (HTTP {response.status_code})"
            ) from exc
        if isinstance(body, dict) and "error" in body:
            error = body["error"]
            kind = error.get("kind", "transport")
            exc_type = ERROR_KINDS.get(kind, TransportError)
            raise exc_type(error.get("message", f"backend error on {endpoint}"))
        if response.status_code != 200:
            raise TransportError(f"{endpoint}: HTTP {response.status_code}")
        return body

    # -- protocol operations ----------------------------------------------

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        check_encode_inputs(texts)
        blocks = []
        for chunk in _chunks(list(texts), self.max_batch):
            body = self._post("/encode", {"texts": chunk})
            block = np.asarray(body.get("vectors", []), dtype=np.float32)
            self._dim = check_embedding_block(block, len(chunk), self._dim)
            blocks.append(block)
        return np.vstack(blocks)

    def score_pairs(
        self, model: ModelHandle, pairs: Sequence[tuple[str, str]]
    ) -> list[float]:
        if not pairs:
            raise PreconditionError("score_pairs requires at least one pair")
        scores: list[float] = []
        for chunk in _chunks(list(pairs), self.max_batch):
            body = self._post(
                "/score_pairs",
                {"model_id": model.model_id, "pairs": [[q, c] for q, c in chunk]},
            )
            scores.extend(check_scores(body.get("scores", []), len(chunk)))
        return scores

    def finetune(
        self, parent: ModelHandle, train: Sequence[Example], spec: FinetuneSpec
    ) -> ModelHandle:
        body = self._post(
            "/finetune",
            {
                "parent_id": parent.model_id,
                "examples": [example_to_wire(ex) for ex in train],
                "spec": spec.to_dict(),
            },
        )
        return ModelHandle(str(body["model_id"]))

    def compute_loss(self, model: ModelHandle, held_out: Sequence[Example]) -> float:
        body = self._post(
            "/loss",
            {
                "model_id": model.model_id,
                "examples": [example_to_wire(ex) for ex in held_out],
            },
        )
        return float(body["loss"])

    def generate(self, model: ModelHandle, inputs: Sequence[str]) -> list[str]:
        if not inputs:
            raise PreconditionError("generate requires at least one input")
        outputs: list[str] = []
        for chunk in _chunks(list(inputs), self.max_batch):
            body = self._post(
                "/generate", {"model_id": model.model_id, "inputs": list(chunk)}
            )
            chunk_out = body.get("outputs", [])
            if len(chunk_out) != len(chunk):
                raise ProtocolViolationError(
                    f"/generate returned {len(chunk_out)} outputs for {len(chunk)} inputs"
                )
            outputs.extend(str(o) for o in chunk_out)
        return outputs

    def train_pair_classifier(
        self, pairs: Sequence[tuple[str, str, int]]
    ) -> ModelHandle:
        body = self._post(
            "/train_pair_classifier",
            {"pairs": [[q, c, int(label)] for q, c, label in pairs]},
        )
        return ModelHandle(str(body["model_id"]))

    def health(self) -> bool:
        try:
            response = self._session.get(f"{self.base_url}/health", timeout=5.0)
            return response.status_code == 200
        except requests.RequestException:
            return False
