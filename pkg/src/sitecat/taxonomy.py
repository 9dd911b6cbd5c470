"""Top-level NAICS (1997) categories, code generalization and SIC crosswalks.

Category codes are plain strings: either 2-6 digits ("311119") or one of the
three range labels used for the multi-prefix sectors ("31-33", "44-45",
"48-49").  Range labels are the canonical top-level form.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

__all__ = [
    "TOP_LEVEL_CATEGORIES",
    "UNCLASSIFIED",
    "Taxonomy",
    "SicCrosswalk",
    "TaxonomyError",
    "InvalidCode",
    "UnknownPrefix",
    "ParseError",
    "is_valid_code",
    "load_taxonomy",
    "generalize",
    "load_crosswalk",
    "parse_crosswalk",
    "map_sic",
    "top_level_labels",
]

TOP_LEVEL_CATEGORIES: tuple[tuple[str, str], ...] = (
    ("11", "Agriculture, Forestry, Fishing, and Hunting"),
    ("21", "Mining"),
    ("22", "Utilities"),
    ("23", "Construction"),
    ("31-33", "Manufacturing"),
    ("42", "Wholesale Trade"),
    ("44-45", "Retail Trade"),
    ("48-49", "Transportation and Warehousing"),
    ("51", "Information"),
    ("52", "Finance and Insurance"),
    ("53", "Real Estate and Rental and Leasing"),
    ("54", "Professional, Scientific and Technical Services"),
    ("55", "Management of Companies and Enterprises"),
    ("56", "Administrative and Support, Waste Management and Remediation Services"),
    ("61", "Educational Services"),
    ("62", "Health Care and Social Assistance"),
    ("71", "Arts, Entertainment and Recreation"),
    ("72", "Accommodation and Food Services"),
    ("81", "Other Services (except Public Administration)"),
    ("92", "Public Administration"),
    ("99", "Unclassified Establishments"),
)

UNCLASSIFIED = "99"

RANGE_LABELS = ("31-33", "44-45", "48-49")

logger = logging.getLogger(__name__)

_DIGITS_RE = re.compile(r"^[0-9]{2,6}$")
_SIC_RE = re.compile(r"^[0-9]{4}$")


class TaxonomyError(ValueError):
    pass


class InvalidCode(TaxonomyError):
    pass


class UnknownPrefix(TaxonomyError):
    def __init__(self, code: str):
        super().__init__(f"no top-level NAICS category for prefix {code[:2]!r} (code {code!r})")
        self.code = code


class ParseError(TaxonomyError):
    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


def is_valid_code(code: str) -> bool:
    return isinstance(code, str) and (code in RANGE_LABELS or bool(_DIGITS_RE.match(code)))


def _expand(label: str) -> list[str]:
    if "-" in label:
        lo, hi = label.split("-")
        return [str(p) for p in range(int(lo), int(hi) + 1)]
    return [label]


@dataclass(frozen=True)
class Taxonomy:
    """The 21 top-level categories and the 2-digit prefix map onto them."""

    top_levels: tuple[tuple[str, str], ...] = TOP_LEVEL_CATEGORIES
    range_map: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.range_map:
            rm = {p: code for code, _ in self.top_levels for p in _expand(code)}
            object.__setattr__(self, "range_map", MappingProxyType(rm))

    @property
    def codes(self) -> tuple[str, ...]:
        return tuple(code for code, _ in self.top_levels)

    def name(self, code: str) -> str:
        return dict(self.top_levels)[code]

    def is_top_level(self, code: str) -> bool:
        return code in self.codes

    def generalize(self, code: str) -> str:
        return generalize(self, code)


_DEFAULT = Taxonomy()


def load_taxonomy() -> Taxonomy:
    return _DEFAULT


def generalize(taxonomy: Taxonomy, code: str) -> str:
    """Map any NAICS code (2-6 digits or a range label) to its top-level category.

    >>> generalize(load_taxonomy(), "311119")
    '31-33'
    """
    if not is_valid_code(code):
        raise InvalidCode(f"not a NAICS code: {code!r}")
    if code in RANGE_LABELS:
        return code
    try:
        return taxonomy.range_map[code[:2]]
    except KeyError:
        raise UnknownPrefix(code) from None


@dataclass(frozen=True)
class SicCrosswalk:
    """4-digit SIC code -> set of NAICS codes."""

    entries: Mapping[str, frozenset[str]]

    def __len__(self):
        return len(self.entries)

    def __contains__(self, sic):
        return sic in self.entries

    def get(self, sic: str) -> frozenset[str]:
        return self.entries.get(sic, frozenset())


def parse_crosswalk(lines: Iterable[str], path="<crosswalk>") -> SicCrosswalk:
    merged: dict[str, set[str]] = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2:
            raise ParseError(path, lineno, f"expected 'SIC,NAICS', got {line!r}")
        sic, naics = parts
        if not _SIC_RE.match(sic):
            raise ParseError(path, lineno, f"SIC code must be 4 digits, got {sic!r}")
        if not _DIGITS_RE.match(naics):
            raise ParseError(path, lineno, f"NAICS code must be 2-6 digits, got {naics!r}")
        merged.setdefault(sic, set()).add(naics)
    return SicCrosswalk(MappingProxyType({k: frozenset(v) for k, v in merged.items()}))


def load_crosswalk(path) -> SicCrosswalk:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        return parse_crosswalk(fh, path)


def map_sic(crosswalk: SicCrosswalk, taxonomy: Taxonomy, sic: str) -> set[str]:
    """Top-level categories for a SIC code; empty when the code is not mapped."""
    out = set()
    for code in crosswalk.get(sic):
        try:
            out.add(generalize(taxonomy, code))
        except UnknownPrefix:
            logger.warning("SIC %s maps to %s, which has no top-level category", sic, code)
    return out


def top_level_labels(taxonomy: Taxonomy, labels, crosswalk: SicCrosswalk | None = None) -> list[str]:
    """Generalize a mixed list of NAICS codes and ``SIC:nnnn`` labels to top-level codes.

    The result is sorted in taxonomy order.  SIC labels need a crosswalk.
    """
    out = set()
    for label in labels:
        label = label.strip()
        if label[:4].upper() == "SIC:":
            if crosswalk is None:
                raise TaxonomyError(f"label {label!r} needs a SIC crosswalk")
            out |= map_sic(crosswalk, taxonomy, label[4:].strip())
        else:
            out.add(generalize(taxonomy, label))
    return [c for c in taxonomy.codes if c in out]
