"""Acceptance gate: one test per criterion, each reporting a PASS/FAIL line.

Every test also enforces its runtime bound; "instant" is taken as one second.
"""

import functools
import json
import random
import time
import warnings
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

import helpers
from helpers import (
    AUTOMOBILE_ONLY,
    CAR_CORPUS,
    FakeFetcher,
    FixtureServer,
    ablation_fixture,
    consistent_with,
    html,
    ok,
    oracle_classify,
    oracle_cosines,
    oracle_evaluate,
    random_corpus,
    random_query,
    weighted_matrix,
)
from sitecat.classifier import DecisionConfig, classify, classify_batch
from sitecat.cli import main
from sitecat.evaluation import Decision, evaluate, f1
from sitecat.lsi import (
    ChecksumMismatch,
    RankClamped,
    build_index,
    dump_index,
    fold_in_query,
    load_index,
    save_index,
    search,
    truncated_svd,
)
from sitecat.spider import CrawlPolicy, Source, Unreachable, UrllibFetcher, crawl_batch, crawl_site
from sitecat.taxonomy import generalize, load_taxonomy

pytestmark = pytest.mark.acceptance

INSTANT = 1.0


def criterion(number, title, seconds):
    def wrap(test):
        @functools.wraps(test)
        def run(*args, **kwargs):
            start = time.perf_counter()
            try:
                test(*args, **kwargs)
                elapsed = time.perf_counter() - start
                assert elapsed <= seconds, f"took {elapsed:.2f}s, bound {seconds}s"
            except BaseException as exc:
                line = f"FAIL  {number:>2}. {title}: {type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
                helpers.ACCEPTANCE[number] = line
                print(line)
                raise
            line = f"PASS  {number:>2}. {title} ({elapsed:.2f}s)"
            helpers.ACCEPTANCE[number] = line
            print(line)
        return run
    return wrap


def full_rank(docs, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankClamped)
        return build_index(docs, rank=10**6, min_df=1, **kw)


def write_jsonl(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


# 1 ---------------------------------------------------------------------------


@criterion(1, "F1 of reported precision/recall pairs", INSTANT)
def test_01_f1_reproduction():
    assert abs(f1(0.64, 0.39) - 0.48) <= 0.005
    assert abs(f1(0.71, 0.75) - 0.73) <= 0.005


# 2 ---------------------------------------------------------------------------


@criterion(2, "evaluate() matches brute-force P/R/F1 on 200 decision sets", 1.0)
def test_02_evaluation_oracle():
    rng = random.Random(2002)
    codes = load_taxonomy().codes
    for _ in range(200):
        labels = rng.sample(codes, rng.randint(1, 5))
        decisions = [
            Decision.of(f"d{i}",
                        rng.sample(labels, rng.randint(0, len(labels))),
                        rng.sample(labels, rng.randint(0, len(labels))))
            for i in range(rng.randint(0, 50))
        ]
        rep = evaluate(decisions)
        per, micro, macro = oracle_evaluate(decisions)
        assert {c: (s.tp, s.fp, s.fn) for c, s in rep.per_category.items()} == per
        assert (rep.micro_p, rep.micro_r, rep.micro_f1) == tuple(float(x) for x in micro)
        for got, want in zip((rep.macro_p, rep.macro_r, rep.macro_f1), macro):
            assert abs(got - float(want)) <= 1e-12


# 3 ---------------------------------------------------------------------------


@criterion(3, "full-rank LSI ranking equals weighted-cosine ranking", 30.0)
def test_03_full_rank_equivalence():
    rng = random.Random(3003)
    for _ in range(50):
        docs, vocab = random_corpus(rng, rng.randint(2, 30), rng.randint(2, 200), max_len=40)
        ix = full_rank(docs)
        for _ in range(20):
            query = random_query(rng, vocab)
            scores = oracle_cosines(docs, query)
            got = search(ix, fold_in_query(ix, query), len(docs))
            if not got:
                assert all(s == 0 for s in scores)
                continue
            order = [n.doc_index for n in got]
            assert sorted(order) == list(range(len(docs)))
            assert consistent_with(order, scores, tol=1e-9)


# 4 ---------------------------------------------------------------------------


@criterion(4, "SVD orthonormality, reconstruction and error monotone in k", 10.0)
def test_04_svd_numerics():
    rng = np.random.default_rng(4004)
    for trial in range(10):
        m, n = rng.integers(5, 60), rng.integers(5, 40)
        a = rng.random((m, n)) * (rng.random((m, n)) < 0.3)
        full = min(m, n)
        u, s, vt = truncated_svd(a, full)
        r = len(s)
        assert np.max(np.abs(u.T @ u - np.eye(r))) <= 1e-8
        assert np.max(np.abs(vt @ vt.T - np.eye(r))) <= 1e-8
        assert np.linalg.norm(a - (u * s) @ vt) <= 1e-8 * np.linalg.norm(a)
        errors = []
        for k in range(1, full + 1):
            uk, sk, vk = truncated_svd(a, k)
            errors.append(np.linalg.norm(a - (uk * sk) @ vk))
        assert all(x >= y - 1e-9 for x, y in zip(errors, errors[1:]))
    # the same invariants on an index built from text
    docs, _ = random_corpus(random.Random(4), 25, 80)
    ix = full_rank(docs)
    _, a = weighted_matrix(docs)
    v = ix.doc_vectors / ix.singular_values
    assert np.max(np.abs(ix.term_factors.T @ ix.term_factors - np.eye(ix.rank))) <= 1e-8
    assert np.max(np.abs(v.T @ v - np.eye(ix.rank))) <= 1e-8
    assert np.linalg.norm(a - ix.term_factors @ ix.doc_vectors.T) <= 1e-8 * np.linalg.norm(a)


# 5 ---------------------------------------------------------------------------


@criterion(5, "reduced rank relates car to the automobile-only document", INSTANT)
def test_05_synonymy():
    reduced = build_index(CAR_CORPUS, rank=2, min_df=1)
    sims = {n.doc_index: n.similarity for n in search(reduced, fold_in_query(reduced, "car"), len(CAR_CORPUS))}
    assert sims[AUTOMOBILE_ONLY] > 0
    full = full_rank(CAR_CORPUS)
    sims = {n.doc_index: n.similarity for n in search(full, fold_in_query(full, "car"), len(CAR_CORPUS))}
    assert abs(sims[AUTOMOBILE_ONLY]) <= 1e-9


# 6 ---------------------------------------------------------------------------


@criterion(6, "classify() equals brute-force kNN over a 50-doc corpus", 5.0)
def test_06_knn_oracle():
    rng = random.Random(6006)
    docs, vocab = random_corpus(rng, 50, 120, max_len=30, max_labels=3)
    ix = build_index(docs, rank=20, min_df=1)
    config = DecisionConfig()
    for _ in range(100):
        query = random_query(rng, vocab)
        res = classify(ix, query, config)
        ranked, top = oracle_classify(ix, query, config.k)
        assert [n.doc_index for n in res.neighbor_trace] == top
        assert [c for c, _ in res.ranked] == [c for c, _ in ranked]
        assert np.allclose([s for _, s in res.ranked], [s for _, s in ranked], atol=1e-9)
        assert res.assigned == [c for c, _ in ranked[:1]]


# 7 ---------------------------------------------------------------------------


def page(**kw):
    return (200, {"Content-Type": "text/html"}, html(**kw))


@criterion(7, "spider: framesets, key-substring links, metatag priority, redirect cap", 5.0)
def test_07_spider_fixture_site():
    policy = CrawlPolicy(politeness_delay=0, max_redirects=3)
    key_links = [("/products", "Our Products"), ("/services", "Services"), ("/about", "About Us"),
                 ("/info", "More Info"), ("/press", "Press Releases"), ("/news", "Latest NEWS")]
    other_links = [("/contact", "Contact"), ("/jobs", "Careers"), ("/products-x", "Click here")]
    routes = {
        "/": page(frames=["nav.html", "main.html"]),
        "/nav.html": page(body="menu"),
        "/main.html": page(keywords="frame keywords", links=key_links + other_links),
    }
    for href, _ in key_links + other_links:
        routes[href] = page(description=f"desc {href.strip('/')}", body=f"body {href.strip('/')}")
    with FixtureServer(routes) as srv:
        doc = crawl_site(srv.domain, UrllibFetcher(timeout=5), policy)
        requested = [p for p in srv.requests if p != "/robots.txt"]
    # (a) the frameset's frames were fetched and contributed text
    assert "/main.html" in requested and "frame keywords" in doc.text
    # (b) exactly the anchors containing a key substring were followed
    assert set(requested) - {"/", "/nav.html", "/main.html"} == {h for h, _ in key_links}
    # (c) metatags were found, so body text is left out
    assert Source.BODY_TEXT not in doc.sources_used and "body" not in doc.text.split()

    with FixtureServer({"/": page(body="we sell shoes", links=[("/about", "About")]),
                        "/about": page(body="family owned")}) as srv:
        doc = crawl_site(srv.domain, UrllibFetcher(timeout=5), policy)
    assert doc.text == "we sell shoes About family owned" and Source.BODY_TEXT in doc.sources_used

    # (d) redirects: a chain within the cap is followed, a longer one stops at the cap
    chain = {f"/r{i}": (302, {"Location": f"/r{i + 1}"}, b"") for i in range(6)}
    chain["/"] = (302, {"Location": "/r0"}, b"")
    chain["/r3"] = page(keywords="after three hops")
    with FixtureServer(chain) as srv:
        assert crawl_site(srv.domain, UrllibFetcher(timeout=5), CrawlPolicy(politeness_delay=0, max_redirects=4)).text \
            == "after three hops"
    chain["/r3"] = (302, {"Location": "/r4"}, b"")
    chain["/r6"] = page(keywords="too far")
    with FixtureServer(chain) as srv:
        with pytest.raises(Unreachable, match="redirect limit 3"):
            crawl_site(srv.domain, UrllibFetcher(timeout=5), policy)
        assert "/r2" in srv.requests and "/r3" not in srv.requests


# 8 ---------------------------------------------------------------------------

# Hand tally per page: title, then the word counts of the description,
# keywords and body.  Title word counts are given in the comments.
TAGSTATS_PAGES = [
    ("", 0, 0, 0),
    ("", 0, 0, 1),
    ("", 0, 0, 4),
    ("", 0, 0, 10),
    ("Acme Steel, Inc.", 0, 0, 11),  # 3
    ("Fish & Chips", 0, 0, 15),  # 2, a lone "&" is not a word
    ("Home", 0, 0, 20),  # 1
    ("Welcome!", 0, 0, 30),  # 1
    ("Joe's Diner - Open 24/7", 0, 0, 45),  # 4
    ("Smith Law Offices", 0, 0, 50),  # 3
    ("Best Hotel in Town", 0, 0, 12),  # 4
    ("Untitled Document", 0, 0, 51),  # 2
    ("Index", 0, 0, 60),  # 1
    ("ABC Widgets", 7, 0, 75),  # 2
    ("Our Products", 11, 0, 100),  # 2
    ("Dr. Lee, DDS", 25, 0, 200),  # 3
    ("Farm Fresh Eggs", 50, 50, 300),  # 3
    ("Press Room", 12, 10, 51),  # 2
    ("one two three four five six seven eight nine ten eleven twelve", 30, 11, 52),  # 12
    (" ".join(["word"] * 30), 51, 40, 500),  # 30
]

# title 4/14/2/0, description 13/1/5/1, keywords 16/1/3/0, body 1/3/7/9 pages
TAGSTATS_EXPECTED = """\
Tag Type          0 words  1-10 words  11-50 words  51+ words
-------------------------------------------------------------
Title                 20%         70%          10%         0%
Meta-Description      65%          5%          25%         5%
Meta-Keywords         80%          5%          15%         0%
Body Text              5%         15%          35%        45%
(20 pages)
"""


@criterion(8, "tagstats reproduces hand-tallied bucket percentages and layout", INSTANT)
def test_08_tag_statistics(tmp_path):
    for i, (title, desc, kw, body) in enumerate(TAGSTATS_PAGES):
        text = html(title=title,
                    description=" ".join(["about"] * desc) if desc else None,
                    keywords=" ".join(["steel"] * kw) if kw else None,
                    body=" ".join(["text"] * body))
        (tmp_path / f"page{i:02d}.html").write_text(text, encoding="utf-8")
    out = tmp_path / "table.txt"
    assert main(["tagstats", str(tmp_path), "--out", str(out)]) == 0
    assert out.read_text(encoding="utf-8") == TAGSTATS_EXPECTED


# 9 ---------------------------------------------------------------------------


@criterion(9, "feature ablation: metatags-only row has the highest micro precision", 30.0)
def test_09_feature_ablation(tmp_path, capsys):
    train, crawl, truth = ablation_fixture()
    args = ["experiment", "feature-ablation",
            "--train", str(write_jsonl(tmp_path / "train.jsonl", train)),
            "--crawl-log", str(write_jsonl(tmp_path / "crawl.jsonl", crawl)),
            "--truth", str(write_jsonl(tmp_path / "truth.jsonl", truth)),
            "--out", str(tmp_path / "table.txt")]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankClamped)
        assert main(args) == 0
    lines = (tmp_path / "table.txt").read_text().splitlines()
    assert lines[0].split("  ")[0] == "Sources of Text"
    rows = {ln[:15].strip(): [float(x) for x in ln[15:].split()] for ln in lines[2:]}
    assert list(rows) == ["Body", "Body + Metatags", "Metatags"]
    assert rows["Metatags"][0] > max(rows["Body"][0], rows["Body + Metatags"][0])


# 10 --------------------------------------------------------------------------


@criterion(10, "index save/load/re-save is byte-identical; corruption is rejected", INSTANT)
def test_10_persistence(tmp_path):
    docs, _ = random_corpus(random.Random(10), 30, 80)
    ix = build_index(docs, rank=8, min_df=1)
    first, second = tmp_path / "a.idx", tmp_path / "b.idx"
    save_index(ix, first)
    loaded = load_index(first)
    assert loaded == ix
    save_index(loaded, second)
    assert first.read_bytes() == second.read_bytes()
    data = first.read_bytes()
    for corrupt in (data[:-1], data[: len(data) // 2], data[:-40] + bytes([data[-40] ^ 1]) + data[-39:]):
        first.write_bytes(corrupt)
        with pytest.raises(ChecksumMismatch):
            load_index(first)


# 11 --------------------------------------------------------------------------


@criterion(11, "crawl_batch and classify_batch are independent of worker count", 10.0)
def test_11_parallel_determinism():
    pages, domains = {}, []
    for i in range(16):
        d = f"site{i}.test"
        domains.append(d)
        pages[f"http://{d}/"] = ok(html(title=f"Site {i}", keywords=f"kw{i} steel",
                                       links=[("/about", "About"), ("/news", "News"), ("/x", "x")]))
        pages[f"http://{d}/about"] = ok(html(description=f"about {i}"))
    dead = {"gone.test", "www.gone.test"}
    domains.append("gone.test")
    policy = CrawlPolicy(politeness_delay=0)

    def key(r):
        return json.dumps(r, sort_keys=True)

    crawled = []
    for workers in (1, 4):
        out = []
        crawl_batch(domains, lambda: FakeFetcher(pages, dead_hosts=dead), policy, workers, out.append, keep_sources=True)
        crawled.append(Counter(map(key, out)))
    assert crawled[0] == crawled[1] and sum(crawled[0].values()) == len(domains)

    docs, vocab = random_corpus(random.Random(11), 40, 100)
    ix = build_index(docs, rank=10, min_df=1)
    rng = random.Random(12)
    records = [{"doc_id": f"q{i}", "text": random_query(rng, vocab)} for i in range(200)]
    classified = []
    for workers in (1, 4):
        out = []
        classify_batch(ix, records, DecisionConfig(), out.append, workers=workers)
        classified.append(Counter(map(key, out)))
    assert classified[0] == classified[1] and sum(classified[0].values()) == len(records)


# 12 --------------------------------------------------------------------------

PREFIX_TO_TOP = {
    "11": "11", "21": "21", "22": "22", "23": "23", "31": "31-33", "32": "31-33", "33": "31-33",
    "42": "42", "44": "44-45", "45": "44-45", "48": "48-49", "49": "48-49", "51": "51", "52": "52",
    "53": "53", "54": "54", "55": "55", "56": "56", "61": "61", "62": "62", "71": "71", "72": "72",
    "81": "81", "92": "92", "99": "99",
}
TOP_LEVEL = [
    ("11", "Agriculture, Forestry, Fishing and Hunting"), ("21", "Mining"), ("22", "Utilities"),
    ("23", "Construction"), ("31-33", "Manufacturing"), ("42", "Wholesale Trade"), ("44-45", "Retail Trade"),
    ("48-49", "Transportation and Warehousing"), ("51", "Information"), ("52", "Finance and Insurance"),
    ("53", "Real Estate and Rental and Leasing"), ("54", "Professional, Scientific, and Technical Services"),
    ("55", "Management of Companies and Enterprises"),
    ("56", "Administrative and Support and Waste Management and Remediation Services"),
    ("61", "Educational Services"), ("62", "Health Care and Social Assistance"),
    ("71", "Arts, Entertainment, and Recreation"), ("72", "Accommodation and Food Services"),
    ("81", "Other Services (except Public Administration)"), ("92", "Public Administration"),
    ("99", "Unclassified Establishments"),
]


@criterion(12, "taxonomy: 21 codes, prefix generalization, idempotence", 5.0)
def test_12_taxonomy():
    tax = load_taxonomy()
    assert [c for c, _ in tax.top_levels] == [c for c, _ in TOP_LEVEL]
    assert len(tax.top_levels) == 21
    assert {c for c, _ in tax.top_levels} == set(PREFIX_TO_TOP.values())
    for prefix, top in PREFIX_TO_TOP.items():
        assert generalize(tax, prefix) == top

    @given(st.sampled_from(sorted(PREFIX_TO_TOP)), st.text(alphabet="0123456789", max_size=4))
    def properties(prefix, rest):
        code = prefix + rest
        top = generalize(tax, code)
        assert top == PREFIX_TO_TOP[prefix] == generalize(tax, code[:2])
        assert generalize(tax, top) == top

    properties()
