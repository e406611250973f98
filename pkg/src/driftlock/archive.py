"""JSON-lines run archives: append-only, resumable, diffable.

Line 1 may be a meta object (`{"kind": "meta", ...}`) recording the
experiment configuration so reports are recomputable from the archive
alone; every other line is one RunRecord.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Iterable, Optional

from .core import RunRecord


class Archive:
    def __init__(self, path, meta: Optional[dict] = None):
        self.path = Path(path)
        self.meta: Optional[dict] = None
        self._keys: set = set()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if self.path.exists():
            for record in self._iter_lines():
                if isinstance(record, dict):
                    self.meta = record
                else:
                    self._keys.add(record.key())
        if meta is not None and self.meta is None:
            self.meta = dict(meta, kind="meta")
            with open(self.path, "a") as fh:
                fh.write(json.dumps(self.meta, separators=(",", ":")) + "\n")

    def _iter_lines(self):
        with open(self.path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if '"kind":"meta"' in line or '"kind": "meta"' in line:
                    payload = json.loads(line)
                    if payload.get("kind") == "meta":
                        yield payload
                        continue
                yield RunRecord.from_json(line)

    def __contains__(self, key: tuple) -> bool:
        return key in self._keys

    def __len__(self) -> int:
        return len(self._keys)

    def append(self, record: RunRecord) -> bool:
        """Write the record unless its key is already archived."""
        if record.key() in self._keys:
            return False
        with open(self.path, "a") as fh:
            fh.write(record.to_json() + "\n")
        self._keys.add(record.key())
        return True

    def records(self) -> list[RunRecord]:
        if not self.path.exists():
            return []
        return [r for r in self._iter_lines() if isinstance(r, RunRecord)]


def load_records(paths: Iterable) -> list[RunRecord]:
    out: list[RunRecord] = []
    for p in paths:
        out.extend(Archive(p).records())
    return out
