"""Line-delimited JSON records: corpora, crawl logs, classification results."""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterator

__all__ = [
    "RecordError",
    "CorpusRecord",
    "SOURCES",
    "dumps_record",
    "iter_records",
    "read_records",
    "read_corpus",
    "RecordSink",
]

SOURCES = ("crawl", "sec", "naics-label", "other")


class RecordError(ValueError):
    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


def dumps_record(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False, separators=(",", ":"))


def iter_records(path, strict: bool = True) -> Iterator[dict | RecordError]:
    """Yield one dict per non-blank line.

    With ``strict=False`` malformed lines are yielded as :class:`RecordError`
    instances instead of raised, so batch jobs can log and continue.
    """
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                if not isinstance(rec, dict):
                    raise ValueError("record is not an object")
            except ValueError as exc:
                err = RecordError(path, lineno, str(exc))
                if strict:
                    raise err from None
                yield err
                continue
            yield rec


def read_records(path) -> list[dict]:
    return list(iter_records(path))


@dataclass
class CorpusRecord:
    doc_id: str
    text: str
    labels: list[str] = field(default_factory=list)
    source: str = "other"

    @classmethod
    def from_dict(cls, rec: dict, where: str = "") -> "CorpusRecord":
        doc_id = rec.get("doc_id")
        if not isinstance(doc_id, str) or not doc_id:
            raise ValueError(f"{where}record without doc_id")
        text = rec.get("text", "")
        labels = rec.get("labels", [])
        if not isinstance(text, str):
            raise ValueError(f"{where}{doc_id}: text must be a string")
        if not isinstance(labels, list) or not all(isinstance(x, str) for x in labels):
            raise ValueError(f"{where}{doc_id}: labels must be a list of strings")
        source = rec.get("source", "other")
        if source not in SOURCES:
            raise ValueError(f"{where}{doc_id}: unknown source {source!r}")
        return cls(doc_id, text, labels, source)

    def to_dict(self) -> dict:
        return {"doc_id": self.doc_id, "text": self.text, "labels": list(self.labels), "source": self.source}


def read_corpus(path) -> list[CorpusRecord]:
    out, seen = [], set()
    for lineno, rec in enumerate(iter_records(path), 1):
        try:
            cr = CorpusRecord.from_dict(rec)
        except ValueError as exc:
            raise RecordError(path, lineno, str(exc)) from None
        if cr.doc_id in seen:
            raise RecordError(path, lineno, f"duplicate doc_id {cr.doc_id!r}")
        seen.add(cr.doc_id)
        out.append(cr)
    return out


class RecordSink:
    """Append-only record log; each append writes and flushes one whole line."""

    def __init__(self, target: str | Path | IO[str], mode: str = "w"):
        if hasattr(target, "write"):
            self._fh, self._owned = target, False
        else:
            self._fh, self._owned = open(target, mode, encoding="utf-8"), True
        self._lock = threading.Lock()
        self.count = 0

    def __call__(self, record: dict) -> None:
        self.append(record)

    def append(self, record: dict) -> None:
        line = dumps_record(record) + "\n"
        with self._lock:
            self._fh.write(line)
            self._fh.flush()
            self.count += 1

    def close(self) -> None:
        if self._owned:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
