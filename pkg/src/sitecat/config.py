"""Sectioned ``key = value`` configuration with command-line overrides.

Example::

    [crawl]
    key_substrings = product, services, about, info, press, news
    max_followed_links = 8
    delay = 1.0
    respect_robots = true

    [index]
    rank = 100
    min_df = 2
    stopwords = default        # "default", "none", or a file path

    [decision]
    k = 10
    threshold = 0.0
    multi_label = false

    [paths]
    crosswalk = data/sic_naics.csv
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

from .classifier import DecisionConfig
from .lsi import DEFAULT_MIN_DF, DEFAULT_RANK, DEFAULT_STOPWORDS, load_stopwords
from .spider import CrawlPolicy

__all__ = ["Config", "ConfigError", "load_config"]

_KNOWN = {
    "crawl": {
        "key_substrings", "max_followed_links", "max_depth", "timeout", "max_redirects",
        "retries", "delay", "respect_robots", "user_agent", "workers", "keep_sources",
    },
    "index": {"rank", "min_df", "stopwords"},
    "decision": {"k", "threshold", "multi_label"},
    "paths": {"crosswalk", "index", "corpora", "reports"},
}


class ConfigError(ValueError):
    pass


@dataclass
class Config:
    crawl: CrawlPolicy = field(default_factory=CrawlPolicy)
    workers: int = 1
    keep_sources: bool = False
    rank: int = DEFAULT_RANK
    min_df: int = DEFAULT_MIN_DF
    stopwords: frozenset[str] = DEFAULT_STOPWORDS
    decision: DecisionConfig = field(default_factory=DecisionConfig)
    paths: dict[str, str] = field(default_factory=dict)


def _bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _stopwords(value: str) -> frozenset[str]:
    v = value.strip()
    if v.lower() == "default":
        return DEFAULT_STOPWORDS
    if v.lower() in ("none", ""):
        return frozenset()
    return load_stopwords(v)


def load_config(path=None, overrides: dict | None = None) -> Config:
    """Read ``path`` (if given) and apply ``overrides``, a ``{"section.key": value}`` map.

    Override values of ``None`` are ignored, so unset command-line flags fall
    through to the file.  Every value is validated by the owning type.
    """
    raw: dict[str, dict[str, str]] = {s: {} for s in _KNOWN}
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        if not parser.read(path, encoding="utf-8"):
            raise ConfigError(f"cannot read config file {path}")
        for section in parser.sections():
            if section not in _KNOWN:
                raise ConfigError(f"unknown config section [{section}]")
            for key, value in parser.items(section):
                if key not in _KNOWN[section]:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                raw[section][key] = value
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        section, key = dotted.split(".", 1)
        raw[section][key] = value

    try:
        return _build(raw)
    except (ValueError, OSError) as exc:
        raise ConfigError(str(exc)) from exc


def _build(raw: dict[str, dict]) -> Config:
    c, i, d = raw["crawl"], raw["index"], raw["decision"]

    def get(section, key, conv):
        v = section.get(key)
        if v is None:
            return None
        return v if not isinstance(v, str) or conv is str else conv(v)

    crawl_kw = {}
    if "key_substrings" in c:
        subs = c["key_substrings"]
        crawl_kw["key_substrings"] = tuple(s.strip() for s in subs.split(",")) if isinstance(subs, str) else tuple(subs)
    for key, name, conv in (
        ("max_followed_links", "max_followed_links", int),
        ("max_depth", "max_depth", int),
        ("timeout", "per_request_timeout", float),
        ("max_redirects", "max_redirects", int),
        ("retries", "retries", int),
        ("delay", "politeness_delay", float),
        ("respect_robots", "respect_robots", _bool),
        ("user_agent", "user_agent", str),
    ):
        v = get(c, key, conv)
        if v is not None:
            crawl_kw[name] = v

    decision_kw = {}
    for key, conv in (("k", int), ("threshold", float), ("multi_label", _bool)):
        v = get(d, key, conv)
        if v is not None:
            decision_kw[key] = v

    cfg = Config(
        crawl=CrawlPolicy(**crawl_kw),
        decision=DecisionConfig(**decision_kw),
        paths={k: str(v) for k, v in raw["paths"].items()},
    )
    workers = get(c, "workers", int)
    if workers is not None:
        if workers < 1:
            raise ValueError(f"workers must be >= 1, got {workers}")
        cfg.workers = workers
    keep = get(c, "keep_sources", _bool)
    if keep is not None:
        cfg.keep_sources = keep
    rank = get(i, "rank", int)
    if rank is not None:
        if rank < 1:
            raise ValueError(f"rank must be >= 1, got {rank}")
        cfg.rank = rank
    min_df = get(i, "min_df", int)
    if min_df is not None:
        if min_df < 1:
            raise ValueError(f"min_df must be >= 1, got {min_df}")
        cfg.min_df = min_df
    if "stopwords" in i and i["stopwords"] is not None:
        sw = i["stopwords"]
        cfg.stopwords = _stopwords(sw) if isinstance(sw, str) else frozenset(sw)
    return cfg
