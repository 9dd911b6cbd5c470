"""Shared test fixtures and independent reference implementations.

The oracles here deliberately avoid the package's own code paths: they use
plain Python loops, exact fractions and a separate eigen-decomposition.
"""

from __future__ import annotations

import math
import random
import threading
from collections import Counter
from fractions import Fraction
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from sitecat.spider import FetchError, FetchResponse

CODES = ("11", "21", "23", "31-33", "42", "44-45", "51", "52", "54", "99")


# -- fetching ------------------------------------------------------------------


class FakeFetcher:
    """In-memory web: ``{url: (status, headers, body)}``.

    Hosts listed in ``dead_hosts`` fail name resolution; URLs listed in
    ``timeouts`` always time out.  Every call is logged in ``calls``.
    """

    def __init__(self, pages, dead_hosts=(), timeouts=()):
        self.pages = dict(pages)
        self.dead_hosts = set(dead_hosts)
        self.timeouts = set(timeouts)
        self.calls = []
        self._lock = threading.Lock()

    def fetch(self, url):
        from urllib.parse import urlsplit

        with self._lock:
            self.calls.append(url)
        host = urlsplit(url).netloc
        if host in self.dead_hosts:
            raise FetchError(url, "Name or service not known", dns=True)
        if url in self.timeouts:
            raise FetchError(url, "timed out")
        if url not in self.pages:
            return FetchResponse(url, 404, {"Content-Type": "text/html"}, b"not found")
        status, headers, body = self.pages[url]
        if isinstance(body, str):
            body = body.encode("utf-8")
        return FetchResponse(url, status, headers, body)


def html(title="", keywords=None, description=None, body="", links=(), frames=(), refresh=None):
    head = f"<title>{title}</title>" if title else ""
    if keywords is not None:
        head += f'<meta name="keywords" content="{keywords}">'
    if description is not None:
        head += f'<META NAME="Description" CONTENT="{description}">'
    if refresh is not None:
        head += f'<meta http-equiv="refresh" content="0; url={refresh}">'
    if frames:
        inner = "".join(f'<frame src="{f}">' for f in frames)
        return f"<html><head>{head}</head><frameset cols='20%,80%'>{inner}</frameset></html>"
    anchors = "".join(f'<a href="{href}">{text}</a> ' for href, text in links)
    return f"<html><head>{head}</head><body>{body} {anchors}</body></html>"


def ok(body, ctype="text/html"):
    return (200, {"Content-Type": ctype}, body)


def redirect(location, status=302):
    return (status, {"Location": location}, b"")


class FixtureServer:
    """Local HTTP server serving ``{path: (status, headers, body)}``."""

    def __init__(self, routes):
        self.routes = routes
        self.requests = []
        server = self

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self):
                server.requests.append(self.path)
                status, headers, body = server.routes.get(self.path, (404, {}, b"not found"))
                if isinstance(body, str):
                    body = body.encode("utf-8")
                self.send_response(status)
                for k, v in headers.items():
                    self.send_header(k, v)
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args):
                pass

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.httpd.serve_forever, args=(0.02,), daemon=True)

    @property
    def domain(self):
        return f"127.0.0.1:{self.httpd.server_address[1]}"

    @property
    def base(self):
        return f"http://{self.domain}"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.httpd.shutdown()
        self.httpd.server_close()


# -- corpora ---------------------------------------------------------------------


def random_corpus(rng: random.Random, n_docs, n_terms, max_len=25, codes=CODES, max_labels=2):
    vocab = [f"term{chr(97 + i // 26)}{chr(97 + i % 26)}" for i in range(n_terms)]
    docs = []
    for j in range(n_docs):
        words = [rng.choice(vocab) for _ in range(rng.randint(1, max_len))]
        labels = rng.sample(codes, rng.randint(1, max_labels))
        docs.append((f"doc{j:03d}", " ".join(words), labels))
    return docs, vocab


def random_query(rng: random.Random, vocab, max_len=10):
    words = [rng.choice(vocab) for _ in range(rng.randint(1, max_len))]
    if rng.random() < 0.2:
        words.append("unseenterm")
    return " ".join(words)


# -- oracles ---------------------------------------------------------------------


def oracle_weights(docs):
    """Log-entropy weighted vectors ``{term: weight}`` per doc, plus global weights."""
    counts = [Counter(text.split()) for _, text, _ in docs]
    n = len(docs)
    gf = Counter()
    for c in counts:
        gf.update(c)
    g = {}
    for term, total in gf.items():
        ent = sum((c[term] / total) * math.log(c[term] / total) for c in counts if term in c)
        g[term] = 1.0 + ent / math.log(n) if n > 1 else 1.0
    vecs = [{t: math.log(1 + tf) * g[t] for t, tf in c.items()} for c in counts]
    return vecs, g


def oracle_cosines(docs, query):
    vecs, g = oracle_weights(docs)
    q = {t: math.log(1 + tf) * g[t] for t, tf in Counter(query.split()).items() if t in g}
    qn = math.sqrt(sum(v * v for v in q.values()))
    out = []
    for v in vecs:
        dn = math.sqrt(sum(x * x for x in v.values()))
        dot = sum(w * v.get(t, 0.0) for t, w in q.items())
        out.append(dot / (dn * qn) if dn > 0 and qn > 0 else 0.0)
    return out


def consistent_with(order, scores, tol=1e-9):
    """True when ``order`` lists documents by non-increasing ``scores`` up to ties within ``tol``."""
    return all(scores[a] >= scores[b] - tol for a, b in zip(order, order[1:]))


def oracle_classify(index, text, k):
    """Full cosine scan in the reduced space followed by similarity-weighted voting."""
    vocab = {t: i for i, t in enumerate(index.vocabulary.terms)}
    from sitecat.lsi import tokenize

    tf = Counter(t for t in tokenize(text, index.stopwords) if t in vocab)
    dims = index.rank
    q = [0.0] * dims
    for term, n in tf.items():
        i = vocab[term]
        w = math.log(1 + n) * float(index.vocabulary.global_weights[i])
        for c in range(dims):
            q[c] += float(index.term_factors[i, c]) * w
    qn = math.sqrt(sum(x * x for x in q))
    if qn == 0:
        return [], []
    sims = []
    for j in range(index.n_docs):
        d = [float(x) for x in index.doc_vectors[j]]
        dn = math.sqrt(sum(x * x for x in d))
        s = sum(a * b for a, b in zip(q, d)) / (dn * qn) if dn > 0 else 0.0
        sims.append((round(max(-1.0, min(1.0, s)), 12), j))
    sims.sort(key=lambda p: (-p[0], p[1]))
    scores = {}
    for s, j in sims[:k]:
        if s <= 0:
            continue
        for label in set(index.doc_labels[j]):
            if label != "99":
                scores[label] = scores.get(label, 0.0) + s
    ranked = sorted(scores.items(), key=lambda p: (-p[1], p[0]))
    return ranked, [j for _, j in sims[:k]]


def oracle_evaluate(decisions):
    """Exact per-category counts and micro/macro P, R, F1 as fractions."""
    cats = sorted({c for d in decisions for c in d.assigned | d.truth})
    per = {}
    for c in cats:
        tp = sum(1 for d in decisions if c in d.assigned and c in d.truth)
        fp = sum(1 for d in decisions if c in d.assigned and c not in d.truth)
        fn = sum(1 for d in decisions if c not in d.assigned and c in d.truth)
        per[c] = (tp, fp, fn)

    def ratio(a, b):
        return Fraction(a, b) if b else Fraction(0)

    def hm(p, r):
        return 2 * p * r / (p + r) if p + r else Fraction(0)

    TP = sum(v[0] for v in per.values())
    FP = sum(v[1] for v in per.values())
    FN = sum(v[2] for v in per.values())
    micro = (ratio(TP, TP + FP), ratio(TP, TP + FN))
    micro = micro + (hm(*micro),)
    if per:
        ps = [ratio(tp, tp + fp) for tp, fp, fn in per.values()]
        rs = [ratio(tp, tp + fn) for tp, fp, fn in per.values()]
        fs = [hm(p, r) for p, r in zip(ps, rs)]
        macro = tuple(sum(x) / len(per) for x in (ps, rs, fs))
    else:
        macro = (Fraction(0),) * 3
    return per, micro, macro


def gram_svd(a: np.ndarray):
    """SVD via the eigen-decomposition of ``a.T @ a``; independent of LAPACK's gesdd path."""
    w, v = np.linalg.eigh(a.T @ a)
    order = np.argsort(-w)
    w, v = w[order], v[:, order]
    keep = w > w[0] * 1e-12
    s = np.sqrt(w[keep])
    v = v[:, keep]
    u = a @ v / s
    return u, s, v.T


# -- fixture corpora for the experiment harness ------------------------------------

TOPICS = {
    "31-33": "steel fabrication machining welding factory alloy casting forging",
    "42": "wholesale distributor bulk supply pallet warehouse shipment dealer",
    "51": "software publishing broadcast telecom internet media streaming",
    "52": "bank insurance loan mortgage credit finance investment savings",
    "62": "clinic hospital patient nursing physician medical therapy dental",
    "72": "hotel restaurant lodging dining catering resort banquet cuisine",
}

NOISE = "welcome home page click here copyright rights reserved site map login cart contact"


def ablation_fixture(n_sites=30, seed=7):
    """Training corpus plus crawl records whose metatags are clean and bodies noisy.

    Each site's metatags use its own category's vocabulary; its body is
    mostly boilerplate plus a heavier dose of some other category's terms.
    """
    rng = random.Random(seed)
    codes = sorted(TOPICS)
    train = []
    for code in codes:
        words = TOPICS[code].split()
        for i in range(4):
            text = " ".join(rng.choice(words) for _ in range(15))
            train.append({"doc_id": f"train-{code}-{i}", "text": text, "labels": [code], "source": "other"})
    crawl, truth = [], []
    for s in range(n_sites):
        code = codes[s % len(codes)]
        decoy = codes[(s + 1 + rng.randrange(len(codes) - 1)) % len(codes)]
        own, other = TOPICS[code].split(), TOPICS[decoy].split()
        keywords = " ".join(rng.sample(own, 4))
        description = " ".join(rng.choice(own) for _ in range(6))
        body = " ".join(
            [rng.choice(NOISE.split()) for _ in range(20)]
            + [rng.choice(other) for _ in range(12)]
            + [rng.choice(own) for _ in range(2)]
        )
        domain = f"site{s:02d}.example"
        crawl.append({
            "domain": domain,
            "status": "ok",
            "text": f"{keywords} {description}",
            "sources_used": ["MetaKeywords", "MetaDescription"],
            "pages_visited": 1,
            "errors": [],
            "per_source": {"title": "", "meta_keywords": keywords, "meta_description": description, "body": body},
        })
        truth.append({"doc_id": domain, "text": "", "labels": [code], "source": "crawl"})
    return train, crawl, truth


# Two topics; "car" and "automobile" never co-occur but share context words.
CAR_CORPUS = [
    ("d0", "car engine wheel", ["31-33"]),
    ("d1", "car engine driver", ["31-33"]),
    ("d2", "automobile engine wheel", ["31-33"]),
    ("d3", "automobile wheel driver", ["31-33"]),
    ("d4", "bank money loan", ["52"]),
    ("d5", "bank money account", ["52"]),
    ("d6", "loan account money", ["52"]),
    ("d7", "bank loan interest", ["52"]),
]
AUTOMOBILE_ONLY = 2


def weighted_matrix(docs):
    """Dense term x doc log-entropy matrix over sorted terms, from the dict oracle."""
    vecs, g = oracle_weights(docs)
    terms = sorted(g)
    a = np.array([[v.get(t, 0.0) for v in vecs] for t in terms])
    return terms, a


# criterion number -> result line, filled by the acceptance module
ACCEPTANCE: dict[int, str] = {}
