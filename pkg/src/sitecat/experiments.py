"""Scripted comparisons: text-source ablation and training-set swap."""

from __future__ import annotations

import logging
from typing import Iterable, Mapping, Sequence

from .classifier import DecisionConfig, classify
from .evaluation import Decision, EvalReport, evaluate
from .lsi import LsiIndex
from .taxonomy import Taxonomy, load_taxonomy

__all__ = [
    "ABLATION_ROWS",
    "MissingSourceText",
    "ablation_texts",
    "feature_ablation",
    "training_swap",
    "decisions_for",
]

logger = logging.getLogger(__name__)

# row label -> per_source keys joined for that variant
ABLATION_ROWS = (
    ("Body", ("body",)),
    ("Body + Metatags", ("body", "meta_keywords", "meta_description")),
    ("Metatags", ("meta_keywords", "meta_description")),
)


class MissingSourceText(ValueError):
    pass


def ablation_texts(record: Mapping) -> dict[str, str]:
    per = record.get("per_source")
    if not isinstance(per, Mapping):
        raise MissingSourceText(
            f"crawl record {record.get('domain')!r} has no per_source text; "
            "re-crawl with --keep-sources"
        )
    return {
        name: " ".join(t for t in (per.get(k, "") for k in keys) if t)
        for name, keys in ABLATION_ROWS
    }


def decisions_for(
    index: LsiIndex,
    items: Iterable[tuple[str, str]],
    truth: Mapping[str, Iterable[str]],
    config: DecisionConfig,
) -> list[Decision]:
    """Classify ``(doc_id, text)`` pairs; items without known truth are skipped."""
    out = []
    for doc_id, text in items:
        labels = truth.get(doc_id)
        if not labels:
            logger.warning("no truth labels for %s; skipped", doc_id)
            continue
        result = classify(index, text, config, doc_id=doc_id)
        out.append(Decision.of(doc_id, result.assigned, labels))
    return out


def feature_ablation(
    index: LsiIndex,
    crawl_records: Sequence[Mapping],
    truth: Mapping[str, Iterable[str]],
    config: DecisionConfig,
    taxonomy: Taxonomy | None = None,
) -> list[tuple[str, EvalReport]]:
    """Evaluate body-only, body+metatags and metatags-only versions of each site."""
    taxonomy = taxonomy or load_taxonomy()
    variants = [(rec.get("domain") or rec.get("doc_id"), ablation_texts(rec)) for rec in crawl_records]
    rows = []
    for name, _ in ABLATION_ROWS:
        items = [(doc_id, texts[name]) for doc_id, texts in variants]
        rows.append((name, evaluate(decisions_for(index, items, truth, config), taxonomy)))
    return rows


def training_swap(
    indexes: Sequence[tuple[str, LsiIndex]],
    test_items: Sequence[tuple[str, str]],
    truth: Mapping[str, Iterable[str]],
    config: DecisionConfig,
    taxonomy: Taxonomy | None = None,
) -> list[tuple[str, EvalReport]]:
    """Evaluate the same test set against classifiers trained on different corpora."""
    taxonomy = taxonomy or load_taxonomy()
    return [
        (name, evaluate(decisions_for(index, test_items, truth, config), taxonomy))
        for name, index in indexes
    ]
