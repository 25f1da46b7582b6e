"""Service configuration: a JSON config file with environment overrides."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

ENV_PREFIX = "DUALCLOCK_"


@dataclass(frozen=True)
class ServiceConfig:
    storage_root: str = "./dualclock-data"
    checkpoint_path: Optional[str] = None
    port: int = 8000
    host: str = "127.0.0.1"
    job_concurrency: int = 1
    requeue_running_on_start: bool = True


def load_config(path: Optional[Path | str] = None) -> ServiceConfig:
    values: dict = {}
    if path is not None:
        values.update(json.loads(Path(path).read_text()))
    env_map = {
        "storage_root": ("STORAGE_ROOT", str),
        "checkpoint_path": ("CHECKPOINT", str),
        "port": ("PORT", int),
        "host": ("HOST", str),
        "job_concurrency": ("JOB_CONCURRENCY", int),
        "requeue_running_on_start": ("REQUEUE_RUNNING", lambda s: s.lower() in ("1", "true")),
    }
    for field, (suffix, cast) in env_map.items():
        raw = os.environ.get(ENV_PREFIX + suffix)
        if raw is not None:
            values[field] = cast(raw)
    return ServiceConfig(**values)
