"""Agent configuration: constructor args, a key=value file, or environment."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

from gridmon.errors import ConfigError

REGISTRY_URL_ENV = "GRIDMON_REGISTRY_URL"


@dataclass
class AgentConfig:
    listen_host: str = "127.0.0.1"
    listen_port: int = 0  # 0 picks a free port
    registry_url: str = ""
    heartbeat_fraction: float = 0.5
    request_timeout_ms: int = 5000
    log_level: str = "INFO"

    def __post_init__(self):
        if not 0 < self.heartbeat_fraction < 1:
            raise ConfigError("heartbeat fraction must lie strictly between 0 and 1")
        if self.request_timeout_ms < 1:
            raise ConfigError("request timeout must be positive")
        if not self.registry_url:
            self.registry_url = os.environ.get(REGISTRY_URL_ENV, "")

    @property
    def request_timeout(self) -> float:
        return self.request_timeout_ms / 1000.0

    @classmethod
    def from_file(cls, path: str | Path) -> "AgentConfig":
        values: dict = {}
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
        kwargs = {}
        if "listen" in values:
            host, _, port = values.pop("listen").partition(":")
            kwargs["listen_host"] = host or "127.0.0.1"
            kwargs["listen_port"] = int(port or 0)
        mapping = {
            "registry_url": ("registry_url", str),
            "heartbeat_fraction": ("heartbeat_fraction", float),
            "request_timeout_ms": ("request_timeout_ms", int),
            "log_level": ("log_level", str),
        }
        for key, value in values.items():
            if key not in mapping:
                raise ConfigError(f"{path}: unknown key {key}")
            name, cast = mapping[key]
            kwargs[name] = cast(value)
        return cls(**kwargs)
