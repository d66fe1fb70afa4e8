"""On-disk corpus format.

A corpus directory holds, per document, ``<doc_id>.txt`` (UTF-8, written
byte-for-byte) and ``<doc_id>.ann`` (standoff), plus ``manifest.jsonl`` with
one JSON object per document::

    {"doc_id": ..., "record_id": ..., "department": ..., "section": ..., "split": ...}

A directory without a manifest is read as a plain standoff directory: every
``*.txt`` becomes a document whose record id is its doc id.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .scheme import AnnotationSet, Document, SchemeRegistry
from .standoff import parse_standoff, serialize_standoff

MANIFEST = "manifest.jsonl"
SPLITS = ("train", "dev", "test")


@dataclass
class Corpus:
    docs: list[AnnotationSet] = field(default_factory=list)
    # record_id -> split name ("" when unassigned)
    splits: dict[str, str] = field(default_factory=dict)

    def __len__(self):
        return len(self.docs)

    def __iter__(self) -> Iterator[AnnotationSet]:
        return iter(self.docs)

    @property
    def record_ids(self) -> list[str]:
        return sorted({a.doc.record_id for a in self.docs})

    def by_record(self) -> dict[str, list[AnnotationSet]]:
        out: dict[str, list[AnnotationSet]] = {}
        for a in self.docs:
            out.setdefault(a.doc.record_id, []).append(a)
        return out

    def split_of(self, ann: AnnotationSet) -> str:
        return self.splits.get(ann.doc.record_id, "")

    def subset(self, split: str) -> list[AnnotationSet]:
        return [a for a in self.docs if self.split_of(a) == split]

    def select_records(self, record_ids: Iterable[str]) -> list[AnnotationSet]:
        wanted = set(record_ids)
        return [a for a in self.docs if a.doc.record_id in wanted]


def _safe_id(doc_id: str) -> str:
    if not doc_id or "/" in doc_id or "\\" in doc_id or doc_id.startswith("."):
        raise ValueError(f"doc_id {doc_id!r} cannot be used as a file name")
    return doc_id


def _atomic_write(path: Path, data: str):
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as f:
        f.write(data)
    os.replace(tmp, path)


def write_corpus(corpus: Corpus, directory: str | Path, scheme: SchemeRegistry | None = None):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    for ann in sorted(corpus.docs, key=lambda a: a.doc.doc_id):
        doc = ann.doc
        name = _safe_id(doc.doc_id)
        _atomic_write(directory / f"{name}.txt", doc.text)
        _atomic_write(directory / f"{name}.ann", serialize_standoff(ann, scheme))
        lines.append(json.dumps({
            "doc_id": doc.doc_id, "record_id": doc.record_id, "department": doc.department,
            "section": doc.section, "split": corpus.splits.get(doc.record_id, ""),
        }, ensure_ascii=False, sort_keys=True))
    _atomic_write(directory / MANIFEST, "".join(line + "\n" for line in lines))


def read_manifest(directory: str | Path) -> list[dict]:
    path = Path(directory) / MANIFEST
    rows = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{line_no}: {exc}") from None
            if "doc_id" not in row:
                raise ValueError(f"{path}:{line_no}: missing doc_id")
            rows.append(row)
    return rows


def _read_text(path: Path) -> str:
    with open(path, encoding="utf-8", newline="") as f:
        return f.read()


def read_corpus(directory: str | Path, scheme: SchemeRegistry) -> Corpus:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"corpus directory {directory} does not exist")
    if (directory / MANIFEST).exists():
        rows = read_manifest(directory)
    else:
        rows = [{"doc_id": p.stem} for p in sorted(directory.glob("*.txt"))]

    corpus = Corpus()
    seen = set()
    for row in rows:
        doc_id = row["doc_id"]
        if doc_id in seen:
            raise ValueError(f"{directory}: duplicate doc_id {doc_id!r}")
        seen.add(doc_id)
        text = _read_text(directory / f"{_safe_id(doc_id)}.txt")
        ann_path = directory / f"{_safe_id(doc_id)}.ann"
        ann_payload = _read_text(ann_path) if ann_path.exists() else ""
        doc = Document(doc_id=doc_id, text=text, record_id=row.get("record_id") or doc_id,
                       section=row.get("section", ""), department=row.get("department", ""))
        ann, _ = parse_standoff(text, ann_payload, scheme, doc=doc, source=str(ann_path))
        corpus.docs.append(ann)
        split = row.get("split", "")
        prev = corpus.splits.get(doc.record_id)
        if prev is not None and prev != split:
            raise ValueError(f"{directory}: record {doc.record_id!r} spans splits {prev!r} and {split!r}")
        corpus.splits[doc.record_id] = split
    return corpus
