"""Results ledger: best observed objective value per (objective, dataset) key.

A single JSON file guarded by an advisory lock.  Updates are read-modify-
write under the lock, and a best value is only ever replaced by a smaller
one.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from filelock import FileLock


class ResultsLedger:
    def __init__(self, path):
        self.path = Path(path)
        self._lock = FileLock(str(self.path) + ".lock")

    def _read(self) -> dict:
        if not self.path.exists():
            return {"best": {}, "runs": {}}
        with open(self.path, encoding="utf-8") as fh:
            return json.load(fh)

    def _write(self, data: dict) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_suffix(self.path.suffix + ".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=1, sort_keys=True)
        os.replace(tmp, self.path)

    def best(self, key: str) -> float | None:
        with self._lock:
            entry = self._read()["best"].get(key)
        return None if entry is None else entry["f_value"]

    def append(self, key: str, run_id: str, f_value: float, config_hash: str, trace_path: str) -> float:
        """Record a run and return the (possibly improved) best value."""
        with self._lock:
            data = self._read()
            best = data["best"].get(key)
            if best is None or f_value < best["f_value"]:
                data["best"][key] = {"f_value": f_value, "run_id": run_id}
            data["runs"][run_id] = {
                "key": key,
                "config_hash": config_hash,
                "trace": trace_path,
                "f_value": f_value,
            }
            self._write(data)
            return data["best"][key]["f_value"]

    def entries(self) -> dict:
        with self._lock:
            return self._read()
