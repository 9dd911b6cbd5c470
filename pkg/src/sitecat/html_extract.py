"""Tolerant extraction of classification text from HTML pages.

The parser is a streaming tag-soup reader built on :class:`html.parser.HTMLParser`;
unclosed, misnested and truncated markup all produce best-effort fields.
Body text excludes script/style content as well as ``<noframes>`` blocks and
image alt text.

Word-count statistics over a corpus of pages are bucketed the same way as the
classic "0 / 1-10 / 11-50 / 51+ words" survey of title, meta and body text.
"""

from __future__ import annotations

import json
import re
import string
from dataclasses import dataclass, field
from html.parser import HTMLParser
from typing import Iterable

__all__ = [
    "PageFields",
    "TagStatsReport",
    "EmptyCorpus",
    "BUCKETS",
    "TAG_TYPES",
    "decode_html",
    "extract_fields",
    "normalize_space",
    "count_words",
    "bucketize",
    "corpus_tag_stats",
]

BUCKETS = ("0", "1-10", "11-50", "51+")
BUCKET_HEADINGS = ("0 words", "1-10 words", "11-50 words", "51+ words")

# (row label, PageFields attribute), in table order
TAG_TYPES = (
    ("Title", "title"),
    ("Meta-Description", "meta_description"),
    ("Meta-Keywords", "meta_keywords"),
    ("Body Text", "body_text"),
)

_SKIP_TAGS = {"script", "style", "noframes", "title", "template"}
_REFRESH_URL_RE = re.compile(r"""^\s*\d*(?:\.\d*)?\s*[;,]?\s*(?:url\s*=\s*)?(.*)$""", re.I | re.S)


class EmptyCorpus(ValueError):
    pass


def normalize_space(text: str) -> str:
    return " ".join(text.split())


@dataclass
class PageFields:
    title: str = ""
    meta_keywords: str = ""
    meta_description: str = ""
    body_text: str = ""
    anchors: list[tuple[str, str]] = field(default_factory=list)
    frame_srcs: list[str] = field(default_factory=list)
    meta_refresh_target: str | None = None

    @property
    def has_metatags(self) -> bool:
        return bool(self.meta_keywords or self.meta_description)


class _FieldParser(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.title: list[str] = []
        self.keywords: list[str] = []
        self.descriptions: list[str] = []
        self.body: list[str] = []
        self.anchors: list[tuple[str, list[str]]] = []
        self.frames: list[str] = []
        self.refresh: str | None = None
        self._skip: list[str] = []
        self._in_title = False
        self._anchor: tuple[str, list[str]] | None = None

    def handle_starttag(self, tag, attrs):
        attrs = {k.lower(): (v or "") for k, v in attrs}
        if tag == "title":
            self._in_title = True
        elif tag in _SKIP_TAGS:
            self._skip.append(tag)
        elif tag == "meta":
            self._meta(attrs)
        elif tag in ("frame", "iframe"):
            src = attrs.get("src", "").strip()
            if src:
                self.frames.append(src)
        elif tag == "a":
            self._close_anchor()
            href = attrs.get("href", "").strip()
            if href:
                self._anchor = (href, [])
        elif tag == "br" or tag in ("p", "div", "td", "li", "tr", "h1", "h2", "h3"):
            self._text(" ")

    def handle_startendtag(self, tag, attrs):
        self.handle_starttag(tag, attrs)
        if tag in _SKIP_TAGS or tag in ("a", "title"):
            self.handle_endtag(tag)

    def handle_endtag(self, tag):
        if tag == "title":
            self._in_title = False
        elif tag == "a":
            self._close_anchor()
        elif tag in _SKIP_TAGS and tag in self._skip:
            # unwind to the matching open tag; tolerates misnesting
            while self._skip and self._skip.pop() != tag:
                pass
        if tag not in _SKIP_TAGS:
            self._text(" ")

    def handle_data(self, data):
        if self._in_title and not self._skip:
            self.title.append(data)
        else:
            self._text(data)

    def _text(self, data):
        if self._skip or self._in_title:
            return
        self.body.append(data)
        if self._anchor is not None:
            self._anchor[1].append(data)

    def _meta(self, attrs):
        name = attrs.get("name", "").strip().lower()
        content = attrs.get("content", "")
        if name == "keywords":
            self.keywords.append(content)
        elif name == "description":
            self.descriptions.append(content)
        elif attrs.get("http-equiv", "").strip().lower() == "refresh" and self.refresh is None:
            self.refresh = _refresh_target(content)

    def _close_anchor(self):
        if self._anchor is not None:
            self.anchors.append(self._anchor)
            self._anchor = None

    def fields(self) -> PageFields:
        self._close_anchor()
        return PageFields(
            title=normalize_space(" ".join(self.title)),
            meta_keywords=normalize_space(" ".join(self.keywords)),
            meta_description=normalize_space(" ".join(self.descriptions)),
            body_text=normalize_space("".join(self.body)),
            anchors=[(href, normalize_space("".join(text))) for href, text in self.anchors],
            frame_srcs=list(self.frames),
            meta_refresh_target=self.refresh,
        )


def _refresh_target(content: str) -> str | None:
    m = _REFRESH_URL_RE.match(content or "")
    if not m:
        return None
    target = m.group(1).strip().strip("'\"").strip()
    return target or None


def decode_html(data: bytes) -> str:
    """UTF-8 first, Latin-1 as the fallback."""
    if isinstance(data, str):
        return data
    if data.startswith(b"\xef\xbb\xbf"):
        data = data[3:]
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError:
        return data.decode("latin-1", errors="replace")


def extract_fields(html: bytes | str) -> PageFields:
    """Parse a page into :class:`PageFields`.  Never raises on bad input."""
    parser = _FieldParser()
    try:
        parser.feed(decode_html(html))
        parser.close()
    except Exception:  # HTMLParser still trips on a few pathological declarations
        pass
    return parser.fields()


_PUNCT = string.punctuation + "\u2018\u2019\u201c\u201d\u2013\u2014\u00ab\u00bb\u00a1\u00bf"


def count_words(text: str) -> int:
    """Whitespace tokens that still contain something after stripping punctuation."""
    return sum(1 for tok in text.split() if tok.strip(_PUNCT))


def bucketize(n: int) -> str:
    if n < 0:
        raise ValueError(f"negative word count: {n}")
    if n == 0:
        return "0"
    if n <= 10:
        return "1-10"
    if n <= 50:
        return "11-50"
    return "51+"


def _percent(count: int, total: int) -> int:
    # round half up, in integers
    return (200 * count + total) // (2 * total)


@dataclass
class TagStatsReport:
    """Per-tag-type bucket counts over a page corpus."""

    total: int
    counts: dict[str, dict[str, int]]

    def percentages(self) -> dict[str, dict[str, int]]:
        return {
            tag: {b: _percent(row[b], self.total) for b in BUCKETS}
            for tag, row in self.counts.items()
        }

    def to_text(self) -> str:
        pct = self.percentages()
        label_w = max(len("Tag Type"), *(len(label) for label, _ in TAG_TYPES))
        widths = [max(len(h), 4) for h in BUCKET_HEADINGS]
        lines = ["  ".join(["Tag Type".ljust(label_w)] + [h.rjust(w) for h, w in zip(BUCKET_HEADINGS, widths)])]
        lines.append("-" * len(lines[0]))
        for label, _ in TAG_TYPES:
            cells = [f"{pct[label][b]}%".rjust(w) for b, w in zip(BUCKETS, widths)]
            lines.append("  ".join([label.ljust(label_w)] + cells))
        lines.append(f"({self.total} pages)")
        return "\n".join(lines) + "\n"

    def to_record(self) -> dict:
        return {
            "total": self.total,
            "counts": {label: {b: self.counts[label][b] for b in BUCKETS} for label, _ in TAG_TYPES},
            "percentages": self.percentages(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), ensure_ascii=False)

    @classmethod
    def from_record(cls, record: dict) -> "TagStatsReport":
        counts = {label: {b: int(n) for b, n in row.items()} for label, row in record["counts"].items()}
        return cls(total=int(record["total"]), counts=counts)

    @classmethod
    def from_json(cls, text: str) -> "TagStatsReport":
        return cls.from_record(json.loads(text))


def corpus_tag_stats(pages: Iterable[PageFields]) -> TagStatsReport:
    counts = {label: dict.fromkeys(BUCKETS, 0) for label, _ in TAG_TYPES}
    total = 0
    for page in pages:
        total += 1
        for label, attr in TAG_TYPES:
            counts[label][bucketize(count_words(getattr(page, attr)))] += 1
    if total == 0:
        raise EmptyCorpus("tag statistics need at least one page")
    return TagStatsReport(total=total, counts=counts)
