"""Serve the model adapter: python -m recross_adapter --port 8700."""

from __future__ import annotations

import argparse
import logging

import uvicorn

from .server import create_app
from .service import AdapterService


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="recross-adapter", description=__doc__)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8700)
    parser.add_argument("--registry", default="adapter-registry", help="checkpoint directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--device", default="cpu")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO)
    service = AdapterService(registry_dir=args.registry, seed=args.seed, device=args.device)
    app = create_app(service)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
