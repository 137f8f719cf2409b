"""HTTP server exposing any in-process Backend over the wire protocol.

Built on the stdlib threading HTTP server so the engine has no server-side
dependencies; fine-tune and classifier training are serialized by a lock
while read endpoints run concurrently.
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any

from ..errors import BackendError, ProtocolViolationError
from .base import PROTOCOL_VERSION, Backend, FinetuneSpec, ModelHandle, example_from_wire

logger = logging.getLogger(__name__)

_STATUS_BY_KIND = {
    "precondition": 400,
    "not_found": 404,
    "protocol_violation": 422,
    "transport": 500,
}


def _handle_encode(backend: Backend, body: dict[str, Any]) -> dict[str, Any]:
    texts = body.get("texts")
    if not isinstance(texts, list) or not all(isinstance(t, str) for t in texts):
        raise ProtocolViolationError("'texts' must be a list of strings")
    vectors = backend.encode(texts)
    return {"vectors": vectors.tolist()}


def _handle_score_pairs(backend: Backend, body: dict[str, Any]) -> dict[str, Any]:
    pairs = body.get("pairs")
    if not isinstance(pairs, list):
        raise ProtocolViolationError("'pairs' must be a list of [query, candidate]")
    parsed = []
    for item in pairs:
        if not isinstance(item, list) or len(item) != 2:
            raise ProtocolViolationError("each pair must be [query, candidate]")
        parsed.append((str(item[0]), str(item[1])))
    scores = backend.score_pairs(ModelHandle(str(body.get("model_id", ""))), parsed)
    return {"scores": scores}


def _handle_finetune(backend: Backend, body: dict[str, Any]) -> dict[str, Any]:
    examples = [example_from_wire(rec) for rec in body.get("examples", [])]
    spec_body = body.get("spec", {})
    spec = FinetuneSpec(
        learning_rate=float(spec_body.get("learning_rate", 1e-6)),
        batch_size=int(spec_body.get("batch_size", 4)),
        epochs=int(spec_body.get("epochs", 2)),
    )
    handle = backend.finetune(ModelHandle(str(body.get("parent_id", ""))), examples, spec)
    return {"model_id": handle.model_id}


def _handle_loss(backend: Backend, body: dict[str, Any]) -> dict[str, Any]:
    examples = [example_from_wire(rec) for rec in body.get("examples", [])]
    loss = backend.compute_loss(ModelHandle(str(body.get("model_id", ""))), examples)
    return {"loss": loss}


def _handle_generate(backend: Backend, body: dict[str, Any]) -> dict[str, Any]:
    inputs = body.get("inputs")
    if not isinstance(inputs, list) or not all(isinstance(t, str) for t in inputs):
        raise ProtocolViolationError("'inputs' must be a list of strings")
    outputs = backend.generate(ModelHandle(str(body.get("model_id", ""))), inputs)
    return {"outputs": outputs}


def _handle_train_pair_classifier(backend: Backend, body: dict[str, Any]) -> dict[str, Any]:
    pairs = body.get("pairs")
    if not isinstance(pairs, list):
        raise ProtocolViolationError("'pairs' must be a list of [query, candidate, label]")
    parsed = []
    for item in pairs:
        if not isinstance(item, list) or len(item) != 3:
            raise ProtocolViolationError("each pair must be [query, candidate, label]")
        parsed.append((str(item[0]), str(item[1]), int(item[2])))
    handle = backend.train_pair_classifier(parsed)
    return {"model_id": handle.model_id}


_ROUTES = {
    "/encode": _handle_encode,
    "/score_pairs": _handle_score_pairs,
    "/finetune": _handle_finetune,
    "/loss": _handle_loss,
    "/generate": _handle_generate,
    "/train_pair_classifier": _handle_train_pair_classifier,
}

_MUTATING = {"/finetune", "/train_pair_classifier"}


class BackendServer(ThreadingHTTPServer):
    """Threading HTTP server bound to a Backend instance."""

    daemon_threads = True

    def __init__(self, backend: Backend, host: str = "127.0.0.1", port: int = 0):
        self.backend = backend
        self.train_lock = threading.Lock()
        super().__init__((host, port), _Handler)

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"

    def serve_in_thread(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


class _Handler(BaseHTTPRequestHandler):
    server: BackendServer

    def log_message(self, fmt: str, *args: Any) -> None:
        logger.debug("backend-server %s", fmt % args)

    def _reply(self, status: int, body: dict[str, Any]) -> None:
        data = json.dumps(body).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _reply_error(self, kind: str, message: str) -> None:
        self._reply(_STATUS_BY_KIND.get(kind, 500), {"error": {"kind": kind, "message": message}})

    def do_GET(self) -> None:
        if self.path == "/health":
            self._reply(200, {"status": "ok", "protocol_version": PROTOCOL_VERSION})
        else:
            self._reply_error("not_found", f"no such endpoint {self.path}")

    def do_POST(self) -> None:
        handler = _ROUTES.get(self.path)
        if handler is None:
            self._reply_error("not_found", f"no such endpoint {self.path}")
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            try:
                body = json.loads(self.rfile.read(length).decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise ProtocolViolationError(f"request body is not valid JSON: {exc}") from exc
            if not isinstance(body, dict):
                raise ProtocolViolationError("request body must be a JSON object")
            if body.get("protocol_version") != PROTOCOL_VERSION:
                raise ProtocolViolationError(
                    f"unsupported protocol_version {body.get('protocol_version')!r}"
                )
            if self.path in _MUTATING:
                with self.server.train_lock:
                    result = handler(self.server.backend, body)
            else:
                result = handler(self.server.backend, body)
            self._reply(200, result)
        except KeyError as exc:
            self._reply_error("protocol_violation", f"missing required field {exc}")
        except BackendError as exc:
            self._reply_error(exc.kind, str(exc))
        except Exception as exc:  # noqa: BLE001 - server boundary
            logger.exception("backend server internal error on %s", self.path)
            self._reply_error("transport", f"internal error: {exc}")


def serve(backend: Backend, host: str = "127.0.0.1", port: int = 8080) -> None:
    """Serve ``backend`` until interrupted."""
    server = BackendServer(backend, host=host, port=port)
    logger.info("backend protocol server listening on %s", server.url)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
