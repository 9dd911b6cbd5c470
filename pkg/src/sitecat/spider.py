"""Targeted crawl of one web site into a single representative document.

Starting from the top page, the spider follows redirects (HTTP and
meta-refresh), frame sources, and anchors whose text contains one of a few
key substrings ("product", "services", "about", ...).  Titles and
keyword/description metatags are collected from every page visited; body
text is used only when no page carried any metatag content.
"""

from __future__ import annotations

import enum
import logging
import socket
import threading
import time
import urllib.error
import urllib.request
import urllib.robotparser
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from email.message import Message
from ipaddress import ip_address
from typing import Callable, Iterable, Iterator, Mapping, Protocol, Sequence
from urllib.parse import urldefrag, urljoin, urlsplit, urlunsplit

from .html_extract import PageFields, extract_fields

__all__ = [
    "DEFAULT_KEY_SUBSTRINGS",
    "Source",
    "CrawlPolicy",
    "FetchResponse",
    "FetchError",
    "Fetcher",
    "UrllibFetcher",
    "Unreachable",
    "RepresentativeDoc",
    "CrawlSummary",
    "registered_domain",
    "site_key",
    "select_links",
    "crawl_site",
    "crawl_batch",
]

logger = logging.getLogger(__name__)

DEFAULT_KEY_SUBSTRINGS = ("product", "services", "about", "info", "press", "news")
DEFAULT_USER_AGENT = "sitecat-spider/0.1"
REDIRECT_STATUSES = frozenset({301, 302, 303, 307, 308})

# frames share their parent's depth; this bounds framesets nested in framesets
MAX_FRAME_NESTING = 3

# second-level labels under which registrations happen one level deeper
_SECOND_LEVEL = frozenset({"co", "com", "net", "org", "ac", "gov", "edu", "ne", "or", "go"})


class Source(str, enum.Enum):
    TITLE = "Title"
    META_KEYWORDS = "MetaKeywords"
    META_DESCRIPTION = "MetaDescription"
    BODY_TEXT = "BodyText"


# per-source text keys in crawl records
PER_SOURCE_KEYS = {
    Source.TITLE: "title",
    Source.META_KEYWORDS: "meta_keywords",
    Source.META_DESCRIPTION: "meta_description",
    Source.BODY_TEXT: "body",
}


@dataclass(frozen=True)
class CrawlPolicy:
    key_substrings: tuple[str, ...] = DEFAULT_KEY_SUBSTRINGS
    max_followed_links: int = 8
    max_depth: int = 1
    per_request_timeout: float = 10.0
    max_redirects: int = 5
    retries: int = 1
    politeness_delay: float = 1.0
    respect_robots: bool = True
    user_agent: str = DEFAULT_USER_AGENT

    def __post_init__(self):
        subs = tuple(s.lower() for s in self.key_substrings if s)
        if not subs:
            raise ValueError("key_substrings must not be empty")
        object.__setattr__(self, "key_substrings", subs)
        if self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")
        for name in ("max_followed_links", "max_redirects", "retries"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.per_request_timeout <= 0:
            raise ValueError("per_request_timeout must be positive")
        if self.politeness_delay < 0:
            raise ValueError("politeness_delay must be >= 0")


# -- fetching ----------------------------------------------------------------


@dataclass
class FetchResponse:
    url: str
    status: int
    headers: Mapping[str, str]
    body: bytes

    def header(self, name: str, default: str = "") -> str:
        name = name.lower()
        for k, v in self.headers.items():
            if k.lower() == name:
                return v
        return default


class FetchError(Exception):
    """Transport-level failure; ``dns`` marks name-resolution errors."""

    def __init__(self, url: str, reason: str, dns: bool = False):
        super().__init__(f"{url}: {reason}")
        self.url = url
        self.reason = reason
        self.dns = dns


class Fetcher(Protocol):
    def fetch(self, url: str) -> FetchResponse: ...


class _NoRedirect(urllib.request.HTTPRedirectHandler):
    def redirect_request(self, req, fp, code, msg, headers, newurl):
        return None


class UrllibFetcher:
    """Plain HTTP(S) GET that reports redirects instead of following them."""

    def __init__(self, timeout: float = 10.0, user_agent: str = DEFAULT_USER_AGENT, max_bytes: int = 2_000_000):
        self.timeout = timeout
        self.user_agent = user_agent
        self.max_bytes = max_bytes
        self._opener = urllib.request.build_opener(_NoRedirect)

    def fetch(self, url: str) -> FetchResponse:
        req = urllib.request.Request(url, headers={"User-Agent": self.user_agent})
        try:
            with self._opener.open(req, timeout=self.timeout) as resp:
                return FetchResponse(resp.geturl(), resp.status, dict(resp.headers.items()), resp.read(self.max_bytes))
        except urllib.error.HTTPError as exc:
            body = exc.read(self.max_bytes) if exc.fp is not None else b""
            headers = dict(exc.headers.items()) if isinstance(exc.headers, Message) else {}
            return FetchResponse(url, exc.code, headers, body)
        except urllib.error.URLError as exc:
            dns = isinstance(exc.reason, socket.gaierror)
            raise FetchError(url, str(exc.reason), dns=dns) from exc
        except (OSError, ValueError) as exc:  # timeouts, resets, malformed URLs
            raise FetchError(url, str(exc) or type(exc).__name__) from exc


# -- URLs --------------------------------------------------------------------


def registered_domain(host: str) -> str:
    """Registrable part of a host name: ``www.shop.acme.co.uk`` -> ``acme.co.uk``.

    A heuristic, not a public-suffix lookup.  IP addresses and single-label
    hosts are returned unchanged.
    """
    host = (host or "").lower().rstrip(".")
    try:
        ip_address(host.strip("[]"))
        return host
    except ValueError:
        pass
    labels = host.split(".")
    if len(labels) <= 2:
        return host
    if len(labels[-1]) == 2 and labels[-2] in _SECOND_LEVEL:
        return ".".join(labels[-3:])
    return ".".join(labels[-2:])


def site_key(url: str) -> str:
    """Registered domain plus any explicit non-default port."""
    parts = urlsplit(url)
    key = registered_domain(parts.hostname or "")
    try:
        port = parts.port
    except ValueError:
        port = None
    if port is not None and port != {"http": 80, "https": 443}.get(parts.scheme):
        key = f"{key}:{port}"
    return key


def _normalize(url: str) -> str:
    parts = urlsplit(urldefrag(url)[0])
    return urlunsplit(parts._replace(path=parts.path or "/"))


def _resolve(base: str, href: str) -> str | None:
    try:
        url = urljoin(base, href.strip())
    except ValueError:
        return None
    if urlsplit(url).scheme not in ("http", "https"):
        return None
    return _normalize(url)


def _matching_anchors(anchors: Iterable[tuple[str, str]], policy: CrawlPolicy) -> Iterator[tuple[str, str]]:
    for href, text in anchors:
        low = text.lower()
        if any(sub in low for sub in policy.key_substrings):
            yield href, text


def select_links(
    anchors: Sequence[tuple[str, str]],
    policy: CrawlPolicy = CrawlPolicy(),
    base_url: str | None = None,
) -> list[str]:
    """Hrefs whose anchor text contains a key substring, in document order.

    Duplicates (by resolved URL when ``base_url`` is given) are dropped and
    the result is capped at ``policy.max_followed_links``.
    """
    out, seen = [], set()
    for href, _ in _matching_anchors(anchors, policy):
        key = _resolve(base_url, href) if base_url else href
        if key is None or key in seen:
            continue
        seen.add(key)
        out.append(href)
        if len(out) >= policy.max_followed_links:
            break
    return out


# -- crawling ----------------------------------------------------------------


class Unreachable(Exception):
    def __init__(self, domain: str, reason: str):
        super().__init__(f"{domain}: {reason}")
        self.domain = domain
        self.reason = reason


@dataclass
class RepresentativeDoc:
    domain: str
    text: str
    sources_used: set[Source]
    pages_visited: int
    errors: list[tuple[str, str]] = field(default_factory=list)
    per_source: dict[str, str] = field(default_factory=dict)
    visited: list[str] = field(default_factory=list)

    def to_record(self, keep_sources: bool = False) -> dict:
        rec = {
            "domain": self.domain,
            "status": "ok",
            "text": self.text,
            "sources_used": [s.value for s in Source if s in self.sources_used],
            "pages_visited": self.pages_visited,
            "errors": [[url, reason] for url, reason in self.errors],
        }
        if keep_sources:
            rec["per_source"] = dict(self.per_source)
        return rec


def unreachable_record(domain: str, reason: str) -> dict:
    return {
        "domain": domain,
        "status": "unreachable",
        "text": "",
        "sources_used": [],
        "pages_visited": 0,
        "errors": [[domain, reason]],
    }


class _SiteSession:
    """Fetching state for one site crawl: delay, retries, robots cache."""

    def __init__(self, fetcher: Fetcher, policy: CrawlPolicy):
        self.fetcher = fetcher
        self.policy = policy
        self._last = None
        self._robots: dict[str, urllib.robotparser.RobotFileParser | None] = {}

    def get(self, url: str) -> FetchResponse:
        last_exc = None
        for _ in range(self.policy.retries + 1):
            self._wait()
            try:
                return self.fetcher.fetch(url)
            except FetchError as exc:
                if exc.dns:
                    raise
                last_exc = exc
        raise last_exc

    def _wait(self):
        if self._last is not None and self.policy.politeness_delay > 0:
            remaining = self.policy.politeness_delay - (time.monotonic() - self._last)
            if remaining > 0:
                time.sleep(remaining)
        self._last = time.monotonic()

    def allowed(self, url: str) -> bool:
        if not self.policy.respect_robots:
            return True
        parts = urlsplit(url)
        origin = f"{parts.scheme}://{parts.netloc}"
        if origin not in self._robots:
            self._robots[origin] = self._load_robots(origin + "/robots.txt")
        rp = self._robots[origin]
        return rp is None or rp.can_fetch(self.policy.user_agent, url)

    def _load_robots(self, url: str):
        try:
            resp = self.get(url)
        except FetchError:
            return None
        if resp.status != 200:
            return None
        rp = urllib.robotparser.RobotFileParser()
        rp.parse(resp.body.decode("utf-8", errors="replace").splitlines())
        return rp

    def resolve(self, url: str, allow_offsite: bool, errors: list) -> tuple[str, PageFields] | None:
        """Fetch ``url`` following HTTP and meta-refresh redirects up to the cap.

        Returns the final URL and its fields, or ``None`` (with the reason
        appended to ``errors``) when no page could be obtained.
        """
        origin = site_key(url)
        hops = 0
        while True:
            if not self.allowed(url):
                errors.append((url, "disallowed by robots.txt"))
                return None
            try:
                resp = self.get(url)
            except FetchError as exc:
                errors.append((url, exc.reason))
                if exc.dns:
                    raise
                return None
            target = None
            if resp.status in REDIRECT_STATUSES:
                location = resp.header("Location")
                if not location:
                    errors.append((url, f"HTTP {resp.status} without Location"))
                    return None
                target = _resolve(url, location)
                fields = None
            elif resp.status >= 400:
                errors.append((url, f"HTTP {resp.status}"))
                return None
            else:
                fields = _page_fields(resp)
                if fields.meta_refresh_target:
                    target = _resolve(url, fields.meta_refresh_target)
                    if target == _normalize(url):
                        target = None
            if target is None:
                if fields is None:
                    errors.append((url, "unusable redirect"))
                    return None
                return url, fields
            if hops >= self.policy.max_redirects:
                errors.append((url, f"redirect limit {self.policy.max_redirects} reached"))
                return (url, fields) if fields is not None else None
            if not allow_offsite and site_key(target) != origin:
                errors.append((target, "redirect leaves the site"))
                return (url, fields) if fields is not None else None
            hops += 1
            url = target


def _page_fields(resp: FetchResponse) -> PageFields:
    ctype = resp.header("Content-Type").lower()
    if ctype and not ("html" in ctype or ctype.startswith("text/")):
        return PageFields()
    return extract_fields(resp.body)


def _entry_urls(domain: str) -> list[str]:
    domain = domain.strip()
    if "://" in domain:
        return [_normalize(domain)]
    urls = [f"http://{domain}/"]
    if not domain.lower().startswith("www.") and not _is_ip_host(domain):
        urls.append(f"http://www.{domain}/")
    return urls


def _is_ip_host(domain: str) -> bool:
    host = urlsplit(f"http://{domain}/").hostname or ""
    try:
        ip_address(host)
        return True
    except ValueError:
        return host == "localhost"


def crawl_site(domain: str, fetcher: Fetcher, policy: CrawlPolicy = CrawlPolicy()) -> RepresentativeDoc:
    """Crawl one site and assemble its representative document.

    Raises :class:`Unreachable` when the top page cannot be fetched.  Failures
    on later pages are recorded in ``errors``.
    """
    session = _SiteSession(fetcher, policy)
    errors: list[tuple[str, str]] = []
    top = None
    for entry in _entry_urls(domain):
        try:
            top = session.resolve(entry, allow_offsite=True, errors=errors)
        except FetchError:
            continue  # name did not resolve; try the www. form
        break
    if top is None:
        reason = errors[-1][1] if errors else "no entry URL"
        raise Unreachable(domain, reason)

    top_url, top_fields = top
    site = site_key(top_url)
    pages: list[PageFields] = []
    visited: list[str] = []
    seen = {top_url}
    links_budget = policy.max_followed_links
    # (url, link depth, frame nesting, fields if already fetched)
    queue: list[tuple[str, int, int, PageFields | None]] = [(top_url, 0, 0, top_fields)]
    while queue:
        url, depth, nesting, fields = queue.pop(0)
        if fields is None:
            try:
                got = session.resolve(url, allow_offsite=False, errors=errors)
            except FetchError:
                got = None
            if got is None:
                continue
            requested = url
            url, fields = got
            if url != requested:
                if url in seen:
                    continue
                seen.add(url)
        pages.append(fields)
        visited.append(url)
        if nesting < MAX_FRAME_NESTING:
            for src in fields.frame_srcs:
                nxt = _resolve(url, src)
                if nxt and nxt not in seen and site_key(nxt) == site:
                    seen.add(nxt)
                    queue.append((nxt, depth, nesting + 1, None))
        if depth + 1 > policy.max_depth:
            continue
        for href, _ in _matching_anchors(fields.anchors, policy):
            if links_budget <= 0:
                break
            nxt = _resolve(url, href)
            if not nxt or nxt in seen or site_key(nxt) != site:
                continue
            seen.add(nxt)
            links_budget -= 1
            queue.append((nxt, depth + 1, 0, None))

    return _assemble(domain, pages, visited, errors)


def _assemble(domain: str, pages: list[PageFields], visited: list[str], errors) -> RepresentativeDoc:
    use_body = not any(p.has_metatags for p in pages)
    parts: list[str] = []
    used: set[Source] = set()
    per_source: dict[Source, list[str]] = {s: [] for s in Source}
    for p in pages:
        for source, value in (
            (Source.TITLE, p.title),
            (Source.META_KEYWORDS, p.meta_keywords),
            (Source.META_DESCRIPTION, p.meta_description),
            (Source.BODY_TEXT, p.body_text),
        ):
            if not value:
                continue
            per_source[source].append(value)
            if source is Source.BODY_TEXT and not use_body:
                continue
            parts.append(value)
            used.add(source)
    return RepresentativeDoc(
        domain=domain,
        text=" ".join(parts),
        sources_used=used,
        pages_visited=len(pages),
        errors=list(errors),
        per_source={PER_SOURCE_KEYS[s]: " ".join(v) for s, v in per_source.items()},
        visited=visited,
    )


# -- batches -----------------------------------------------------------------


@dataclass
class CrawlSummary:
    reachable: int = 0
    unreachable: int = 0
    empty_text: int = 0

    def as_dict(self) -> dict:
        return {"reachable": self.reachable, "unreachable": self.unreachable, "empty_text": self.empty_text}


def crawl_batch(
    domains: Sequence[str],
    fetcher: Fetcher | Callable[[], Fetcher],
    policy: CrawlPolicy,
    workers: int,
    sink: Callable[[dict], None],
    keep_sources: bool = False,
) -> CrawlSummary:
    """Crawl ``domains`` with ``workers`` threads, one record per domain into ``sink``.

    Domains are dealt round-robin into one sublist per worker.  ``fetcher``
    is either a thread-safe fetcher or a zero-argument factory called once
    per worker.  ``sink`` calls are serialized.
    """
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    summary = CrawlSummary()
    lock = threading.Lock()

    def run(sublist: list[str]):
        own = fetcher() if callable(fetcher) and not hasattr(fetcher, "fetch") else fetcher
        for domain in sublist:
            try:
                doc = crawl_site(domain, own, policy)
            except Unreachable as exc:
                logger.info("unreachable: %s", exc)
                record = unreachable_record(domain, exc.reason)
                with lock:
                    sink(record)
                    summary.unreachable += 1
                continue
            except Exception as exc:  # a crawler bug must not lose the domain's record
                logger.exception("crawl of %s failed", domain)
                record = unreachable_record(domain, f"internal error: {exc}")
                with lock:
                    sink(record)
                    summary.unreachable += 1
                continue
            record = doc.to_record(keep_sources)
            with lock:
                sink(record)
                summary.reachable += 1
                if not doc.text:
                    summary.empty_text += 1

    sublists = [list(domains[i::workers]) for i in range(workers)]
    if workers == 1:
        run(sublists[0])
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for fut in [pool.submit(run, s) for s in sublists if s]:
                fut.result()
    return summary
