"""Model-backend protocol: contract, deterministic builtin, HTTP client/server."""

from .base import (
    BASE_MODEL,
    BASE_MODEL_ID,
    DEFAULT_MAX_BATCH,
    PROTOCOL_VERSION,
    Backend,
    FinetuneSpec,
    ModelHandle,
    candidate_scoring_text,
)
from .builtin import CONSTANT_SCORER_ID, BuiltinBackend
from .client import HttpBackend
from .server import BackendServer, serve

__all__ = [
    "BASE_MODEL",
    "BASE_MODEL_ID",
    "CONSTANT_SCORER_ID",
    "DEFAULT_MAX_BATCH",
    "PROTOCOL_VERSION",
    "Backend",
    "BackendServer",
    "BuiltinBackend",
    "FinetuneSpec",
    "HttpBackend",
    "ModelHandle",
    "candidate_scoring_text",
    "serve",
]
