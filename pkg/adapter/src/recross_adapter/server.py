"""FastAPI app exposing the adapter over the JSON/HTTP backend protocol."""

from __future__ import annotations

import logging
from typing import Any

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .service import AdapterError, AdapterService, ExampleRecord

logger = logging.getLogger(__name__)

PROTOCOL_VERSION = 1

_STATUS_BY_KIND = {
    "precondition": 400,
    "not_found": 404,
    "protocol_violation": 422,
    "transport": 500,
}


def _error(kind: str, message: str) -> JSONResponse:
    return JSONResponse(
        status_code=_STATUS_BY_KIND.get(kind, 500),
        content={"error": {"kind": kind, "message": message}},
    )


class EncodeRequest(BaseModel):
    protocol_version: int
    texts: list[str]


class ScorePairsRequest(BaseModel):
    protocol_version: int
    model_id: str
    pairs: list[list[str]]


class FinetuneRequest(BaseModel):
    protocol_version: int
    parent_id: str
    examples: list[dict]
    spec: dict = Field(default_factory=dict)


class LossRequest(BaseModel):
    protocol_version: int
    model_id: str
    examples: list[dict]


class GenerateRequest(BaseModel):
    protocol_version: int
    model_id: str
    inputs: list[str]


class TrainClassifierRequest(BaseModel):
    protocol_version: int
    pairs: list[list[Any]]


def create_app(service: AdapterService) -> FastAPI:
    app = FastAPI(title="recross model adapter")

    @app.exception_handler(AdapterError)
    async def adapter_error(_: Request, exc: AdapterError) -> JSONResponse:
        return _error(exc.kind, str(exc))

    @app.exception_handler(RuntimeError)
    async def runtime_error(_: Request, exc: RuntimeError) -> JSONResponse:
        # Out-of-memory and friends: report as transport, keep serving.
        logger.exception("runtime failure")
        return _error("transport", f"backend runtime failure: {exc}")

    @app.exception_handler(Exception)
    async def unexpected_error(_: Request, exc: Exception) -> JSONResponse:
        logger.exception("unexpected failure")
        return _error("transport", f"internal error: {exc}")

    def check_version(version: int) -> JSONResponse | None:
        if version != PROTOCOL_VERSION:
            return _error("protocol_violation", f"unsupported protocol_version {version!r}")
        return None

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "protocol_version": PROTOCOL_VERSION, "dim": service.dim}

    @app.post("/encode")
    def encode(request: EncodeRequest):
        return check_version(request.protocol_version) or {
            "vectors": service.encode(request.texts)
        }

    @app.post("/score_pairs")
    def score_pairs(request: ScorePairsRequest):
        bad = check_version(request.protocol_version)
        if bad:
            return bad
        for pair in request.pairs:
            if len(pair) != 2:
                return _error("protocol_violation", "each pair must be [query, candidate]")
        pairs = [(p[0], p[1]) for p in request.pairs]
        return {"scores": service.score_pairs(request.model_id, pairs)}

    @app.post("/finetune")
    def finetune(request: FinetuneRequest):
        bad = check_version(request.protocol_version)
        if bad:
            return bad
        examples = [ExampleRecord.from_wire(rec) for rec in request.examples]
        return {"model_id": service.finetune(request.parent_id, examples, request.spec)}

    @app.post("/loss")
    def loss(request: LossRequest):
        bad = check_version(request.protocol_version)
        if bad:
            return bad
        examples = [ExampleRecord.from_wire(rec) for rec in request.examples]
        return {"loss": service.compute_loss(request.model_id, examples)}

    @app.post("/generate")
    def generate(request: GenerateRequest):
        return check_version(request.protocol_version) or {
            "outputs": service.generate(request.model_id, request.inputs)
        }

    @app.post("/train_pair_classifier")
    def train_pair_classifier(request: TrainClassifierRequest):
        bad = check_version(request.protocol_version)
        if bad:
            return bad
        parsed = []
        for pair in request.pairs:
            if len(pair) != 3:
                return _error("protocol_violation", "each pair must be [query, candidate, label]")
            parsed.append((str(pair[0]), str(pair[1]), int(pair[2])))
        return {"model_id": service.train_pair_classifier(parsed)}

    return app
