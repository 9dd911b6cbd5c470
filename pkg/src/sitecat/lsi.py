"""Latent semantic index over labelled training documents.

Documents are tokenized, weighted with log-entropy weights::

    local_ij  = log(1 + tf_ij)
    global_i  = 1 + sum_j p_ij log(p_ij) / log(n_docs),   p_ij = tf_ij / gf_i
    A_ij      = local_ij * global_i

and the term-document matrix ``A`` is factored with a truncated SVD
``A ~ U_k S_k V_k^T``.  Queries are folded into the reduced space as
``S_k^-1 U_k^T q`` and ranked against the training documents by cosine
similarity, with both sides scaled by ``S_k``.  At full rank this ranking is
identical to plain cosine ranking on the weighted vectors.
"""

from __future__ import annotations

import hashlib
import logging
import math
import re
import struct
import warnings
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import svds

__all__ = [
    "DEFAULT_RANK",
    "DEFAULT_MIN_DF",
    "DEFAULT_STOPWORDS",
    "TrainingDoc",
    "Vocabulary",
    "LsiIndex",
    "Neighbor",
    "EmptyVocabulary",
    "UnlabeledDocument",
    "DuplicateDocId",
    "RankClamped",
    "IndexFormatError",
    "FormatVersionMismatch",
    "ChecksumMismatch",
    "tokenize",
    "load_stopwords",
    "term_weights",
    "truncated_svd",
    "build_index",
    "fold_in_query",
    "search",
    "weighted_query",
    "save_index",
    "load_index",
    "dump_index",
    "parse_index",
]

logger = logging.getLogger(__name__)

DEFAULT_RANK = 100
DEFAULT_MIN_DF = 2

# above this many matrix cells the factorization switches to sparse Lanczos
DENSE_SVD_LIMIT = 20_000_000

SIMILARITY_DECIMALS = 12

DEFAULT_STOPWORDS = frozenset(
    """
    about after all also an and any are as at be been but by can could did do
    does for from had has have he her his how if in into is it its may me more
    most my no not of on or our out over she so some such than that the their
    them then there these they this those to up us was we were what when where
    which who will with would you your
    """.split()
)

_TOKEN_RE = re.compile(r"[^\W_]+")


class EmptyVocabulary(ValueError):
    pass


class UnlabeledDocument(ValueError):
    pass


class DuplicateDocId(ValueError):
    pass


class RankClamped(UserWarning):
    pass


class IndexFormatError(ValueError):
    pass


class FormatVersionMismatch(IndexFormatError):
    pass


class ChecksumMismatch(IndexFormatError):
    pass


def tokenize(text: str, stopwords: Iterable[str] | None = DEFAULT_STOPWORDS) -> list[str]:
    """Lowercased alphanumeric runs, without numbers, 1-char terms or stopwords.

    >>> tokenize("A 42 B2B")
    ['b2b']
    """
    stop = stopwords or ()
    return [
        t for t in _TOKEN_RE.findall(text.lower())
        if len(t) >= 2 and not t.isdigit() and t not in stop
    ]


def load_stopwords(path) -> frozenset[str]:
    words = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0]
            words.update(w.lower() for w in line.split())
    return frozenset(words)


class TrainingDoc(NamedTuple):
    doc_id: str
    text: str
    labels: Sequence[str]
    source: str = "other"


@dataclass(frozen=True, eq=False)
class Vocabulary:
    terms: tuple[str, ...]
    df: np.ndarray
    global_weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "_ids", {t: i for i, t in enumerate(self.terms)})

    def __len__(self):
        return len(self.terms)

    def __contains__(self, term):
        return term in self._ids

    def id(self, term: str) -> int | None:
        return self._ids.get(term)

    def __eq__(self, other):
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return (
            self.terms == other.terms
            and np.array_equal(self.df, other.df)
            and np.array_equal(self.global_weights, other.global_weights)
        )


@dataclass(frozen=True, eq=False)
class LsiIndex:
    vocabulary: Vocabulary
    term_factors: np.ndarray     # |V| x k, columns orthonormal
    singular_values: np.ndarray  # k, positive, non-increasing
    doc_vectors: np.ndarray      # n_docs x k, rows are (S_k V_k^T) columns
    doc_ids: tuple[str, ...]
    doc_labels: tuple[tuple[str, ...], ...]
    doc_sources: tuple[str, ...]
    stopwords: frozenset[str] = DEFAULT_STOPWORDS
    min_df: int = DEFAULT_MIN_DF

    @property
    def rank(self) -> int:
        return len(self.singular_values)

    @property
    def n_docs(self) -> int:
        return len(self.doc_ids)

    def doc_coordinates(self, j: int) -> np.ndarray:
        """Training document ``j`` in fold-in coordinates (row ``j`` of ``V_k``)."""
        return self.doc_vectors[j] / self.singular_values

    def __eq__(self, other):
        if not isinstance(other, LsiIndex):
            return NotImplemented
        return (
            self.vocabulary == other.vocabulary
            and np.array_equal(self.term_factors, other.term_factors)
            and np.array_equal(self.singular_values, other.singular_values)
            and np.array_equal(self.doc_vectors, other.doc_vectors)
            and self.doc_ids == other.doc_ids
            and self.doc_labels == other.doc_labels
            and self.doc_sources == other.doc_sources
            and self.stopwords == other.stopwords
            and self.min_df == other.min_df
        )


class Neighbor(NamedTuple):
    doc_index: int
    doc_id: str
    similarity: float


def term_weights(counts: sp.spmatrix) -> np.ndarray:
    """Entropy global weight per row of a term x document count matrix."""
    counts = sp.csr_matrix(counts, dtype=np.float64)
    n_docs = counts.shape[1]
    if n_docs < 2:
        return np.ones(counts.shape[0])
    gf = np.asarray(counts.sum(axis=1)).ravel()
    coo = counts.tocoo()
    p = coo.data / gf[coo.row]
    plogp = np.zeros(counts.shape[0])
    np.add.at(plogp, coo.row, p * np.log(p))
    return 1.0 + plogp / math.log(n_docs)


def _fix_signs(u: np.ndarray, vt: np.ndarray) -> None:
    """Make the largest-magnitude entry of every left singular vector positive."""
    for c in range(u.shape[1]):
        col = u[:, c]
        if col[np.argmax(np.abs(col))] < 0:
            u[:, c] = -col
            vt[c, :] = -vt[c, :]


def truncated_svd(a, k: int, dense_limit: int = DENSE_SVD_LIMIT):
    """Rank-``k`` SVD ``a ~ u @ diag(s) @ vt`` keeping only non-zero singular values.

    Small matrices go through LAPACK's dense SVD; large sparse ones through
    ARPACK with a fixed start vector so results are reproducible.  Returns
    fewer than ``k`` triplets when the numerical rank is lower.
    """
    m, n = a.shape
    k = min(k, m, n)
    if m * n <= dense_limit or k >= min(m, n) - 1:
        dense = a.toarray() if sp.issparse(a) else np.asarray(a, dtype=np.float64)
        u, s, vt = np.linalg.svd(dense, full_matrices=False)
    else:
        v0 = np.full(min(m, n), 1.0 / math.sqrt(min(m, n)))
        u, s, vt = svds(sp.csc_matrix(a, dtype=np.float64), k=k, v0=v0, solver="arpack")
        order = np.argsort(-s, kind="stable")
        u, s, vt = u[:, order], s[order], vt[order]
    tol = (s[0] if len(s) else 0.0) * max(m, n) * np.finfo(np.float64).eps
    keep = min(k, int(np.count_nonzero(s > tol)))
    u = np.ascontiguousarray(u[:, :keep])
    s = np.ascontiguousarray(s[:keep])
    vt = np.ascontiguousarray(vt[:keep])
    _fix_signs(u, vt)
    return u, s, vt


def _count_matrix(token_lists, vocab_ids: dict[str, int]) -> sp.csc_matrix:
    rows, cols, vals = [], [], []
    for j, tokens in enumerate(token_lists):
        for term, tf in Counter(tokens).items():
            i = vocab_ids.get(term)
            if i is not None:
                rows.append(i)
                cols.append(j)
                vals.append(tf)
    shape = (len(vocab_ids), len(token_lists))
    return sp.csc_matrix((np.asarray(vals, dtype=np.float64), (rows, cols)), shape=shape)


def build_index(
    docs: Iterable,
    rank: int = DEFAULT_RANK,
    min_df: int = DEFAULT_MIN_DF,
    stopwords: Iterable[str] | None = DEFAULT_STOPWORDS,
    dense_limit: int = DENSE_SVD_LIMIT,
) -> LsiIndex:
    """Build an :class:`LsiIndex` from ``(doc_id, text, labels[, source])`` items.

    Terms occurring in fewer than ``min_df`` documents are dropped.  A
    ``rank`` above the matrix rank is clamped with a :class:`RankClamped`
    warning.
    """
    if rank < 1:
        raise ValueError(f"rank must be >= 1, got {rank}")
    if min_df < 1:
        raise ValueError(f"min_df must be >= 1, got {min_df}")
    stopwords = frozenset(stopwords or ())
    docs = [TrainingDoc(*d) for d in docs]
    if not docs:
        raise EmptyVocabulary("no training documents")
    seen = set()
    for d in docs:
        if not d.labels:
            raise UnlabeledDocument(f"training document {d.doc_id!r} has no labels")
        if d.doc_id in seen:
            raise DuplicateDocId(f"duplicate doc_id {d.doc_id!r}")
        seen.add(d.doc_id)

    token_lists = [tokenize(d.text, stopwords) for d in docs]
    df = Counter(t for tokens in token_lists for t in set(tokens))
    terms = tuple(sorted(t for t, c in df.items() if c >= min_df))
    if not terms:
        raise EmptyVocabulary(f"no term occurs in at least {min_df} documents")
    vocab_ids = {t: i for i, t in enumerate(terms)}

    counts = _count_matrix(token_lists, vocab_ids)
    gw = term_weights(counts)
    weighted = counts.copy()
    weighted.data = np.log1p(weighted.data)
    weighted = sp.diags(gw) @ weighted

    u, s, vt = truncated_svd(weighted, rank, dense_limit=dense_limit)
    if len(s) == 0:
        raise EmptyVocabulary("every retained term has zero global weight")
    if len(s) < rank:
        msg = f"rank {rank} exceeds the term-document matrix rank; using {len(s)}"
        warnings.warn(msg, RankClamped, stacklevel=2)

    vocabulary = Vocabulary(
        terms=terms,
        df=np.array([df[t] for t in terms], dtype=np.int64),
        global_weights=gw,
    )
    logger.info("built LSI index: %d docs, %d terms, rank %d", len(docs), len(terms), len(s))
    return LsiIndex(
        vocabulary=vocabulary,
        term_factors=u,
        singular_values=s,
        doc_vectors=np.ascontiguousarray((vt * s[:, None]).T),
        doc_ids=tuple(d.doc_id for d in docs),
        doc_labels=tuple(tuple(sorted(set(d.labels))) for d in docs),
        doc_sources=tuple(d.source for d in docs),
        stopwords=stopwords,
        min_df=min_df,
    )


def weighted_query(index: LsiIndex, text: str) -> tuple[np.ndarray, np.ndarray]:
    """Term ids and log-entropy weights of the known terms in ``text``."""
    vocab = index.vocabulary
    counts = Counter(t for t in tokenize(text, index.stopwords) if t in vocab)
    ids = np.array([vocab.id(t) for t in counts], dtype=np.int64)
    tf = np.array(list(counts.values()), dtype=np.float64)
    return ids, np.log1p(tf) * vocab.global_weights[ids]


def fold_in_query(index: LsiIndex, text: str) -> np.ndarray:
    ids, w = weighted_query(index, text)
    if len(ids) == 0:
        return np.zeros(index.rank)
    return (index.term_factors[ids].T @ w) / index.singular_values


def search(index: LsiIndex, query: np.ndarray, n: int) -> list[Neighbor]:
    """Top ``n`` training documents by cosine similarity to a folded-in query."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    scaled = np.asarray(query, dtype=np.float64) * index.singular_values
    qnorm = np.linalg.norm(scaled)
    if qnorm == 0.0:
        return []
    dnorm = np.linalg.norm(index.doc_vectors, axis=1)
    dots = index.doc_vectors @ scaled
    with np.errstate(divide="ignore", invalid="ignore"):
        sims = np.where(dnorm > 0, dots / (dnorm * qnorm), 0.0)
    # snap float noise so numerically equal scores tie and fall back to doc order
    sims = np.round(np.clip(sims, -1.0, 1.0), SIMILARITY_DECIMALS) + 0.0
    order = np.lexsort((np.arange(len(sims)), -sims))[:n]
    return [Neighbor(int(j), index.doc_ids[j], float(sims[j])) for j in order]


# -- persistence -------------------------------------------------------------

MAGIC = b"SCLSI\x00"
FORMAT_VERSION = 1
_DIGEST = hashlib.sha256
_DIGEST_SIZE = 32


def _pack_str(out: list[bytes], s: str) -> None:
    b = s.encode("utf-8")
    out.append(struct.pack("<I", len(b)))
    out.append(b)


def _pack_f64(out: list[bytes], arr: np.ndarray) -> None:
    out.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def dump_index(index: LsiIndex) -> bytes:
    """Serialize an index to the versioned binary format (see :func:`save_index`)."""
    vocab = index.vocabulary
    out = [MAGIC, struct.pack("<B", FORMAT_VERSION)]
    out.append(struct.pack("<IIII", len(vocab), index.n_docs, index.rank, index.min_df))
    stop = sorted(index.stopwords)
    out.append(struct.pack("<I", len(stop)))
    for w in stop:
        _pack_str(out, w)
    for i, term in enumerate(vocab.terms):
        _pack_str(out, term)
        out.append(struct.pack("<dQ", float(vocab.global_weights[i]), int(vocab.df[i])))
    _pack_f64(out, index.singular_values)
    _pack_f64(out, index.term_factors)
    _pack_f64(out, index.doc_vectors)
    for doc_id, labels, source in zip(index.doc_ids, index.doc_labels, index.doc_sources):
        _pack_str(out, doc_id)
        _pack_str(out, source)
        out.append(struct.pack("<I", len(labels)))
        for label in labels:
            _pack_str(out, label)
    body = b"".join(out)
    return body + _DIGEST(body).digest()


class _Reader:
    def __init__(self, buf: bytes, pos: int = 0):
        self.buf = buf
        self.pos = pos

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise IndexFormatError("index file ends early")
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (n,) = self.unpack("<I")
        return self.take(n).decode("utf-8")

    def f64(self, *shape: int) -> np.ndarray:
        count = int(np.prod(shape))
        arr = np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64)
        return arr.reshape(shape)


def parse_index(data: bytes) -> LsiIndex:
    header = len(MAGIC) + 1
    if len(data) < len(MAGIC) or data[:len(MAGIC)] != MAGIC:
        raise IndexFormatError("not an LSI index file (bad magic)")
    if len(data) < header:
        raise ChecksumMismatch("index file truncated")
    version = data[len(MAGIC)]
    if version != FORMAT_VERSION:
        raise FormatVersionMismatch(f"index format version {version}, expected {FORMAT_VERSION}")
    if len(data) < header + _DIGEST_SIZE:
        raise ChecksumMismatch("index file truncated")
    body, digest = data[:-_DIGEST_SIZE], data[-_DIGEST_SIZE:]
    if _DIGEST(body).digest() != digest:
        raise ChecksumMismatch("index checksum does not match contents")

    r = _Reader(body, header)
    n_terms, n_docs, k, min_df = r.unpack("<IIII")
    (n_stop,) = r.unpack("<I")
    stopwords = frozenset(r.string() for _ in range(n_stop))
    terms, gw, df = [], [], []
    for _ in range(n_terms):
        terms.append(r.string())
        g, d = r.unpack("<dQ")
        gw.append(g)
        df.append(d)
    s = r.f64(k)
    u = r.f64(n_terms, k)
    docs = r.f64(n_docs, k)
    ids, sources, labels = [], [], []
    for _ in range(n_docs):
        ids.append(r.string())
        sources.append(r.string())
        (n_labels,) = r.unpack("<I")
        labels.append(tuple(r.string() for _ in range(n_labels)))
    if r.pos != len(body):
        raise IndexFormatError("trailing bytes after index payload")
    return LsiIndex(
        vocabulary=Vocabulary(tuple(terms), np.array(df, dtype=np.int64), np.array(gw, dtype=np.float64)),
        term_factors=u,
        singular_values=s,
        doc_vectors=docs,
        doc_ids=tuple(ids),
        doc_labels=tuple(labels),
        doc_sources=tuple(sources),
        stopwords=stopwords,
        min_df=min_df,
    )


def save_index(index: LsiIndex, path) -> None:
    """Write ``index`` to ``path``.

    Layout (little-endian): magic, version byte, counts, stopwords, vocabulary
    (length-prefixed UTF-8 term, global weight, df), singular values, term
    factors and document vectors as row-major float64, document ids, sources
    and labels, then a SHA-256 digest of everything before it.
    """
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(dump_index(index))
    tmp.replace(path)


def load_index(path) -> LsiIndex:
    return parse_index(Path(path).read_bytes())
