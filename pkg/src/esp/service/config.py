"""Service configuration: one JSON file plus environment overrides.

Config file keys: ``listen`` ("host:port"), ``store`` (store directory),
``users`` (path to the static user table), ``watchdog``
({wall_clock_timeout, step_budget, check_interval}), ``workers``,
``mc_parallelism``, ``mc_batch_size``, ``frontend`` (optional static UI
directory). Environment: ESP_CONFIG points at the file, ESP_LISTEN and
ESP_STORE override the respective keys.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from ..engine import WatchdogPolicy
from ..errors import EspError


@dataclass
class ServiceConfig:
    listen: str = "127.0.0.1:8030"
    store_path: str = "store"
    users_path: str | None = None
    watchdog: WatchdogPolicy = field(default_factory=WatchdogPolicy)
    workers: int = 2
    mc_parallelism: int = 2
    mc_batch_size: int = 256
    frontend_path: str | None = None

    @property
    def host(self) -> str:
        host, _, _ = self.listen.rpartition(":")
        return host or "127.0.0.1"

    @property
    def port(self) -> int:
        _, _, port = self.listen.rpartition(":")
        try:
            return int(port)
        except ValueError as exc:
            raise EspError("FORMAT", f"bad listen address {self.listen!r}") from exc


def load_config(path: str | os.PathLike | None = None) -> ServiceConfig:
    path = path or os.environ.get("ESP_CONFIG")
    doc: dict = {}
    if path:
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise EspError("NOT_FOUND", f"config file {path!r} not found") from exc
        except ValueError as exc:
            raise EspError("FORMAT", f"config file is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise EspError("FORMAT", "config file must hold a JSON object")
    watchdog_doc = doc.get("watchdog", {})
    if not isinstance(watchdog_doc, dict):
        raise EspError("FORMAT", "'watchdog' must be an object")
    watchdog = WatchdogPolicy(
        wall_clock_timeout=float(watchdog_doc.get("wall_clock_timeout", 60.0)),
        step_budget=int(watchdog_doc.get("step_budget", 100_000_000)),
        check_interval=float(watchdog_doc.get("check_interval", 0.25)),
    )
    config = ServiceConfig(
        listen=os.environ.get("ESP_LISTEN", doc.get("listen", "127.0.0.1:8030")),
        store_path=os.environ.get("ESP_STORE", doc.get("store", "store")),
        users_path=doc.get("users"),
        watchdog=watchdog,
        workers=int(doc.get("workers", 2)),
        mc_parallelism=int(doc.get("mc_parallelism", 2)),
        mc_batch_size=int(doc.get("mc_batch_size", 256)),
        frontend_path=doc.get("frontend"),
    )
    config.port  # validates the listen address eagerly
    return config
