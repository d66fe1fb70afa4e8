"""Model checkpoint container.

A checkpoint is a zip archive (stored, fixed timestamps, so identical models
give identical bytes) holding:

``meta.json``
    ``{"format": "medie-checkpoint", "version": 1, "kind": ..., "models": {name: meta}}``
``<name>/<array>.npy``
    numpy arrays for each contained model.

``kind`` is ``crf``, ``span`` (attribute + relation heads) or ``pipeline``.
"""

from __future__ import annotations

import io
import json
import os
import zipfile
from pathlib import Path

import numpy as np

FORMAT = "medie-checkpoint"
VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


class CheckpointError(ValueError):
    pass


def _entry(zf: zipfile.ZipFile, name: str, data: bytes):
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def save(path: str | Path, kind: str, models: dict[str, tuple[dict, dict]]):
    path = Path(path)
    meta = {"format": FORMAT, "version": VERSION, "kind": kind,
            "models": {name: m for name, (m, _) in sorted(models.items())}}
    tmp = path.with_name(path.name + ".tmp")
    with zipfile.ZipFile(tmp, "w") as zf:
        _entry(zf, "meta.json", json.dumps(meta, sort_keys=True, ensure_ascii=False, indent=1).encode())
        for name, (_, arrays) in sorted(models.items()):
            for key, arr in sorted(arrays.items()):
                buf = io.BytesIO()
                np.save(buf, np.ascontiguousarray(arr), allow_pickle=False)
                _entry(zf, f"{name}/{key}.npy", buf.getvalue())
    os.replace(tmp, path)


def load(path: str | Path) -> tuple[str, dict[str, tuple[dict, dict]]]:
    try:
        with zipfile.ZipFile(path) as zf:
            meta = json.loads(zf.read("meta.json"))
            if meta.get("format") != FORMAT:
                raise CheckpointError(f"{path}: not a {FORMAT} file")
            if meta.get("version") != VERSION:
                raise CheckpointError(f"{path}: unsupported checkpoint version {meta.get('version')}")
            models = {}
            for name, m in meta["models"].items():
                arrays = {}
                for entry in zf.namelist():
                    if entry.startswith(name + "/") and entry.endswith(".npy"):
                        arrays[entry[len(name) + 1:-4]] = np.load(io.BytesIO(zf.read(entry)), allow_pickle=False)
                models[name] = (m, arrays)
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint ({exc})") from exc
    return meta["kind"], models
