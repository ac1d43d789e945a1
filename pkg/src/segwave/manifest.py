"""Run manifests: everything needed to repeat a run."""

from __future__ import annotations

import datetime as _dt
import platform
from dataclasses import dataclass, field

import numpy as np

from . import __version__


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    """Tool version, full configuration, seed and input digest.

    Timestamps are only filled in when ``timestamps=True`` so that two
    identical runs write identical files by default.
    """

    command: str
    config: dict
    seed: int | None = None
    source_digest: str | None = None
    tool_version: str = __version__
    timestamps: bool = False
    started: str | None = None
    finished: str | None = None
    environment: dict = field(default_factory=dict)

    def start(self) -> "RunManifest":
        if self.timestamps:
            self.started = _now()
            self.environment = {"python": platform.python_version(), "numpy": np.__version__}
        return self

    def finish(self) -> "RunManifest":
        if self.timestamps:
            self.finished = _now()
        return self

    def to_dict(self) -> dict:
        d = {
            "tool_version": self.tool_version,
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "source_digest": self.source_digest,
        }
        if self.timestamps:
            d["started"] = self.started
            d["finished"] = self.finished
            d["environment"] = self.environment
        return d
