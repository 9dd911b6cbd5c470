"""Precision, recall and F1 with micro- and macro-averaging.

Per category ``c`` a document counts as a true positive when ``c`` is both
assigned and true, a false positive when assigned only, and a false negative
when true only.  Micro scores pool these counts over all categories; macro
scores average the per-category ratios over the categories that occur in at
least one truth or assigned set.  Every 0/0 ratio is taken as 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .taxonomy import Taxonomy, load_taxonomy

__all__ = [
    "DomainError",
    "UnknownCategory",
    "Decision",
    "CategoryScores",
    "EvalReport",
    "f1",
    "evaluate",
    "render_report",
    "render_table",
    "STYLES",
]

STYLES = ("feature-table", "training-table", "full")


class DomainError(ValueError):
    pass


class UnknownCategory(ValueError):
    def __init__(self, codes):
        self.codes = sorted(codes)
        super().__init__(f"codes not in the top-level taxonomy: {', '.join(self.codes)}")


def f1(p: float, r: float) -> float:
    """Harmonic mean of precision and recall, 0 when both are 0."""
    for name, v in (("precision", p), ("recall", r)):
        if not 0.0 <= v <= 1.0:
            raise DomainError(f"{name} must lie in [0, 1], got {v}")
    if p + r == 0:
        return 0.0
    return 2 * p * r / (p + r)


def _ratio(num: int, den: int) -> Fraction:
    # exact, so pooled scores are correctly rounded when converted to float
    return Fraction(num, den) if den else Fraction(0)


@dataclass(frozen=True)
class Decision:
    doc_id: str
    assigned: frozenset[str]
    truth: frozenset[str]

    @classmethod
    def of(cls, doc_id, assigned: Iterable[str], truth: Iterable[str]) -> "Decision":
        return cls(doc_id, frozenset(assigned), frozenset(truth))


@dataclass
class CategoryScores:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return float(_ratio(self.tp, self.tp + self.fp))

    @property
    def recall(self) -> float:
        return float(_ratio(self.tp, self.tp + self.fn))

    @property
    def f1(self) -> float:
        return float(f1(_ratio(self.tp, self.tp + self.fp), _ratio(self.tp, self.tp + self.fn)))


@dataclass
class EvalReport:
    per_category: dict[str, CategoryScores]
    micro_p: float
    micro_r: float
    micro_f1: float
    macro_p: float
    macro_r: float
    macro_f1: float
    n_docs: int
    n_decisions: int
    taxonomy: Taxonomy = field(default_factory=load_taxonomy, repr=False, compare=False)

    def to_record(self) -> dict:
        return {
            "n_docs": self.n_docs,
            "n_decisions": self.n_decisions,
            "micro": {"p": self.micro_p, "r": self.micro_r, "f1": self.micro_f1},
            "macro": {"p": self.macro_p, "r": self.macro_r, "f1": self.macro_f1},
            "per_category": {
                code: {
                    "tp": s.tp, "fp": s.fp, "fn": s.fn,
                    "p": s.precision, "r": s.recall, "f1": s.f1,
                }
                for code, s in self.per_category.items()
            },
        }


def evaluate(
    decisions: Iterable[Decision],
    taxonomy: Taxonomy | None = None,
    macro_over: str = "observed",
) -> EvalReport:
    """Score assigned categories against known ones.

    ``macro_over="observed"`` averages over categories that appear in some
    truth or assigned set; ``"all"`` averages over every top-level category.
    """
    taxonomy = taxonomy or load_taxonomy()
    if macro_over not in ("observed", "all"):
        raise ValueError(f"macro_over must be 'observed' or 'all', got {macro_over!r}")
    decisions = list(decisions)
    valid = set(taxonomy.codes)
    unknown = {c for d in decisions for c in d.assigned | d.truth} - valid
    if unknown:
        raise UnknownCategory(unknown)

    per: dict[str, CategoryScores] = {}
    for d in decisions:
        for c in d.assigned | d.truth:
            s = per.setdefault(c, CategoryScores())
            if c in d.assigned and c in d.truth:
                s.tp += 1
            elif c in d.assigned:
                s.fp += 1
            else:
                s.fn += 1
    per = {c: per[c] for c in taxonomy.codes if c in per}

    tp = sum(s.tp for s in per.values())
    fp = sum(s.fp for s in per.values())
    fn = sum(s.fn for s in per.values())
    micro_p, micro_r = _ratio(tp, tp + fp), _ratio(tp, tp + fn)

    if macro_over == "all":
        macro_cats = [per.get(c, CategoryScores()) for c in taxonomy.codes]
    else:
        macro_cats = list(per.values())
    n = len(macro_cats)
    macro_p = sum(s.precision for s in macro_cats) / n if n else 0.0
    macro_r = sum(s.recall for s in macro_cats) / n if n else 0.0
    macro_f1 = sum(s.f1 for s in macro_cats) / n if n else 0.0

    return EvalReport(
        per_category=per,
        micro_p=float(micro_p),
        micro_r=float(micro_r),
        micro_f1=float(f1(micro_p, micro_r)),
        macro_p=macro_p,
        macro_r=macro_r,
        macro_f1=macro_f1,
        n_docs=len(decisions),
        n_decisions=tp + fp,
        taxonomy=taxonomy,
    )


def _table(header: Sequence[str], rows: Sequence[Sequence[str]], left: int = 1) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(header)]

    def fmt(cells):
        return "  ".join(
            c.ljust(w) if i < left else c.rjust(w) for i, (c, w) in enumerate(zip(cells, widths))
        ).rstrip()

    head = fmt(header)
    lines = [head, "-" * len(head)]
    lines.extend(fmt(r) for r in rows)
    return "\n".join(lines) + "\n"


def _num(x: float) -> str:
    return f"{x:.2f}"


_MICRO = ("micro P", "micro R", "micro F1")
_MACRO = ("macro P", "macro R", "macro F1")


def render_table(rows: Sequence[tuple[str, EvalReport]], style: str = "feature-table") -> str:
    """Several labelled reports as one comparison table.

    ``feature-table`` shows micro P/R/F1 (text-source comparison layout);
    ``training-table`` adds the macro columns (training-set comparison layout).
    Reports without any scored category are omitted.
    """
    if style == "feature-table":
        header = ("Sources of Text",) + _MICRO
    elif style == "training-table":
        header = ("Classifier",) + _MICRO + _MACRO
    else:
        raise ValueError(f"unknown table style {style!r}")
    body = []
    for name, rep in rows:
        if not rep.per_category:
            continue
        cells = [name, _num(rep.micro_p), _num(rep.micro_r), _num(rep.micro_f1)]
        if style == "training-table":
            cells += [_num(rep.macro_p), _num(rep.macro_r), _num(rep.macro_f1)]
        body.append(cells)
    return _table(header, body)


def _render_full(report: EvalReport) -> str:
    header = ("Category", "Description", "TP", "FP", "FN", "P", "R", "F1")
    rows = []
    for code, name in report.taxonomy.top_levels:
        s = report.per_category.get(code, CategoryScores())
        rows.append([code, name, str(s.tp), str(s.fp), str(s.fn), _num(s.precision), _num(s.recall), _num(s.f1)])
    if report.per_category:
        tp = sum(s.tp for s in report.per_category.values())
        fp = sum(s.fp for s in report.per_category.values())
        fn = sum(s.fn for s in report.per_category.values())
        rows.append(["micro", "", str(tp), str(fp), str(fn), _num(report.micro_p), _num(report.micro_r), _num(report.micro_f1)])
        rows.append(["macro", "", "", "", "", _num(report.macro_p), _num(report.macro_r), _num(report.macro_f1)])
    text = _table(header, rows, left=2)
    return text + f"{report.n_docs} documents, {report.n_decisions} assigned categories\n"


def render_report(report: EvalReport, style: str = "feature-table", name: str = "all") -> str:
    if style == "full":
        return _render_full(report)
    return render_table([(name, report)], style)
