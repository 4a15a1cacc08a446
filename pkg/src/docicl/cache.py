"""Content-addressed file cache shared by the pipeline stages.

Entries live under ``<root>/<namespace>/<sha256>.{json,npy}``. Writes go
through a temp file and an atomic replace so concurrent workers never see a
partial entry; corrupt entries read as misses and get recomputed.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np


def stable_hash(*parts: str) -> str:
    return hashlib.sha256("\x1f".join(parts).encode("utf-8")).hexdigest()


class FileCache:
    def __init__(self, root: str | Path):
        self.root = Path(root)

    def _path(self, namespace: str, key: str, suffix: str) -> Path:
        return self.root / namespace / f"{key}{suffix}"

    def get_json(self, namespace: str, key: str):
        path = self._path(namespace, key, ".json")
        if not path.is_file():
            return None
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except (json.JSONDecodeError, OSError):
            return None

    def put_json(self, namespace: str, key: str, obj) -> None:
        path = self._path(namespace, key, ".json")
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(json.dumps(obj, ensure_ascii=False), encoding="utf-8")
        tmp.replace(path)

    def get_array(self, namespace: str, key: str) -> np.ndarray | None:
        path = self._path(namespace, key, ".npy")
        if not path.is_file():
            return None
        try:
            return np.load(path)
        except (ValueError, OSError):
            return None

    def put_array(self, namespace: str, key: str, arr: np.ndarray) -> None:
        path = self._path(namespace, key, ".npy")
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp.npy")
        with tmp.open("wb") as fh:
            np.save(fh, arr)
        tmp.replace(path)
