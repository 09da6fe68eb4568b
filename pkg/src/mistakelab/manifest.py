"""Run manifests: enough metadata in every output directory to re-run a command."""

from __future__ import annotations

import datetime as _dt
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__

MANIFEST_NAME = "run_manifest.json"


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


@dataclass
class RunManifest:
    command: str
    flags: dict = field(default_factory=dict)
    backend_spec: str | None = None
    locator_spec: str | None = None
    seeds: dict = field(default_factory=dict)
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    version: str = __version__
    argv: list = field(default_factory=lambda: list(sys.argv))
    started_at: str = field(default_factory=_now)
    finished_at: str | None = None

    def finish(self) -> None:
        self.finished_at = _now()

    def write(self, directory: str | Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        if self.finished_at is None:
            self.finish()
        path = directory / MANIFEST_NAME
        path.write_text(json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n")
        return path
