"""Command-line server entry point."""

from __future__ import annotations

import argparse
import logging
import sys

import uvicorn

from .app import create_app
from .config import ShimConfig, ShimConfigError, load_config


def main() -> None:
    parser = argparse.ArgumentParser(
        prog="modelshim",
        description="Serve /v1/generate, /v1/nli, /v1/infer over pretrained models.",
    )
    parser.add_argument("--config", required=True, help="shim config file (INI)")
    parser.add_argument("--host", default="0.0.0.0")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        config: ShimConfig = load_config(args.config)
        app = create_app(config)
    except (ShimConfigError, OSError) as exc:
        print(f"startup error: {exc}", file=sys.stderr)
        sys.exit(1)
    uvicorn.run(app, host=args.host, port=config.port)


if __name__ == "__main__":
    main()
