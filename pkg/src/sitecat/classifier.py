"""K-nearest-neighbor category decisions over an LSI index.

Each of the K most similar training documents votes its cosine similarity
for every label it carries.  Negative similarities do not vote, and the
"99 Unclassified Establishments" label is never a candidate.  The top
category is always assigned; with ``multi_label`` every further category
whose score reaches the threshold is assigned as well.
"""

from __future__ import annotations

import logging
import threading
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .lsi import LsiIndex, Neighbor, fold_in_query, search
from .taxonomy import UNCLASSIFIED

__all__ = [
    "DEFAULT_K",
    "DecisionConfig",
    "ClassificationResult",
    "BatchSummary",
    "rank_categories",
    "classify",
    "classify_batch",
]

logger = logging.getLogger(__name__)

DEFAULT_K = 10


@dataclass(frozen=True)
class DecisionConfig:
    k: int = DEFAULT_K
    threshold: float = 0.0
    multi_label: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"K must be >= 1, got {self.k}")
        if not self.threshold >= 0:
            raise ValueError(f"threshold must be >= 0, got {self.threshold}")


@dataclass
class ClassificationResult:
    doc_id: str
    ranked: list[tuple[str, float]]
    assigned: list[str]
    neighbor_trace: list[Neighbor] = field(default_factory=list)

    def to_record(self, config: DecisionConfig) -> dict:
        return {
            "doc_id": self.doc_id,
            "assigned": list(self.assigned),
            "ranked": [[code, round(score, 6)] for code, score in self.ranked],
            "k": config.k,
            "threshold": config.threshold,
        }


def rank_categories(
    neighbors: Sequence[Neighbor],
    labels: Sequence[Iterable[str]],
    config: DecisionConfig,
) -> list[tuple[str, float]]:
    """Similarity-weighted votes of the top-K neighbors, best category first.

    ``labels[i]`` is the label set of training document ``i``.  Only
    categories receiving a positive vote are listed; ties are broken by code.

    >>> from sitecat.lsi import Neighbor
    >>> ns = [Neighbor(0, "d1", 0.9), Neighbor(1, "d2", 0.8), Neighbor(2, "d3", 0.7)]
    >>> rank_categories(ns, [{"51"}, {"51"}, {"52"}], DecisionConfig(k=3))
    [('51', 1.7000000000000002), ('52', 0.7)]
    """
    scores: dict[str, float] = {}
    for nb in neighbors[: config.k]:
        if nb.similarity <= 0:
            continue
        for code in set(labels[nb.doc_index]):
            if code != UNCLASSIFIED:
                scores[code] = scores.get(code, 0.0) + nb.similarity
    return sorted(scores.items(), key=lambda item: (-item[1], item[0]))


def _assign(ranked: list[tuple[str, float]], config: DecisionConfig) -> list[str]:
    if not ranked:
        return []
    assigned = [ranked[0][0]]
    if config.multi_label:
        assigned.extend(code for code, score in ranked[1:] if score >= config.threshold)
    return assigned


def classify(index: LsiIndex, text: str, config: DecisionConfig = DecisionConfig(), doc_id: str = "") -> ClassificationResult:
    query = fold_in_query(index, text)
    neighbors = search(index, query, config.k)
    ranked = rank_categories(neighbors, index.doc_labels, config)
    return ClassificationResult(doc_id, ranked, _assign(ranked, config), neighbors)


@dataclass
class BatchSummary:
    records: int = 0
    errors: int = 0
    unassigned: int = 0
    assignments: Counter = field(default_factory=Counter)

    def as_dict(self) -> dict:
        return {
            "records": self.records,
            "errors": self.errors,
            "unassigned": self.unassigned,
            "assignments": dict(sorted(self.assignments.items())),
        }


def _record_id(record: dict) -> str:
    doc_id = record.get("doc_id", record.get("domain"))
    if not isinstance(doc_id, str) or not doc_id:
        raise ValueError("record has no doc_id/domain")
    return doc_id


def classify_batch(
    index: LsiIndex,
    records: Iterable[dict | Exception],
    config: DecisionConfig,
    sink: Callable[[dict], None],
    workers: int = 1,
    extra: Callable[[dict, dict], None] | None = None,
) -> BatchSummary:
    """Classify every input record and append one result record per input to ``sink``.

    ``records`` may contain exception instances standing in for lines that
    failed to parse; those are logged and counted, never fatal.  ``extra``
    can decorate each output record from its input (used to carry truth
    labels through).  ``sink`` is called from worker threads but never
    concurrently.
    """
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    summary = BatchSummary()
    lock = threading.Lock()

    def one(record):
        if isinstance(record, Exception):
            logger.error("skipping unreadable record: %s", record)
            with lock:
                summary.errors += 1
            return
        try:
            doc_id = _record_id(record)
            text = record.get("text", "")
            if not isinstance(text, str):
                raise ValueError(f"record {doc_id!r}: text is not a string")
        except ValueError as exc:
            logger.error("skipping record: %s", exc)
            with lock:
                summary.errors += 1
            return
        result = classify(index, text, config, doc_id=doc_id)
        out = result.to_record(config)
        if extra is not None:
            extra(record, out)
        with lock:
            sink(out)
            summary.records += 1
            summary.assignments.update(result.assigned)
            if not result.assigned:
                summary.unassigned += 1

    if workers == 1:
        for record in records:
            one(record)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for fut in [pool.submit(one, r) for r in records]:
                fut.result()
    return summary
