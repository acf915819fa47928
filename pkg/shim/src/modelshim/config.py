"""Shim configuration: model paths, device, batching, port.

Loaded from an INI file; MODELSHIM_PORT and MODELSHIM_DEVICE environment
variables override the file.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass
from pathlib import Path


class ShimConfigError(Exception):
    pass


@dataclass(frozen=True)
class ShimConfig:
    generator_model: str | None = None
    nli_model: str | None = None
    task_model: str | None = None
    device: str = "cpu"
    max_batch_size: int = 16
    top_k: int = 200
    port: int = 8100

    def __post_init__(self) -> None:
        if not (self.generator_model or self.nli_model or self.task_model):
            raise ShimConfigError("configure at least one backend model")
        if not 0 < self.port < 65536:
            raise ShimConfigError(f"invalid port {self.port}")
        if self.max_batch_size < 1:
            raise ShimConfigError("max_batch_size must be >= 1")


def load_config(path: str | Path) -> ShimConfig:
    parser = configparser.ConfigParser()
    text = Path(path).read_text(encoding="utf-8")
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ShimConfigError(f"bad config file: {exc}") from exc

    def get(section, key, default=None):
        if parser.has_option(section, key):
            value = parser.get(section, key).strip()
            return value or default
        return default

    config = ShimConfig(
        generator_model=get("models", "generator", None),
        nli_model=get("models", "nli", None),
        task_model=get("models", "task", None),
        device=os.environ.get("MODELSHIM_DEVICE", get("server", "device", "cpu")),
        max_batch_size=int(get("server", "max_batch_size", "16")),
        top_k=int(get("server", "top_k", "200")),
        port=int(os.environ.get("MODELSHIM_PORT", get("server", "port", "8100"))),
    )
    return config
