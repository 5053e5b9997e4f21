"""BM25 (Okapi) and BM25L sparse indexes.

Scoring follows the rank-bm25 reference formulations, including its
epsilon floor for negative Okapi IDFs and BM25L's delta shift applied to
every document, so scores line up with that library given equal tokens.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from ..corpus import Document
from ..ranking import RankedList
from ..text import tokenize

VARIANTS = ("bm25", "bm25l")


@dataclass(frozen=True)
class SparseParams:
    k1: float = 1.5
    b: float = 0.75
    epsilon: float = 0.25
    delta: float = 0.5


@dataclass
class SparseIndex:
    variant: str
    params: SparseParams
    doc_ids: list[str]
    doc_len: dict[str, int]
    term_freq: dict[str, Counter]
    doc_freq: dict[str, int]
    idf: dict[str, float] = field(repr=False)

    @property
    def doc_count(self) -> int:
        return len(self.doc_ids)

    @property
    def avg_doc_len(self) -> float:
        return sum(self.doc_len.values()) / len(self.doc_ids)


def _okapi_idf(doc_freq: dict[str, int], n: int, epsilon: float) -> dict[str, float]:
    idf = {t: math.log(n - df + 0.5) - math.log(df + 0.5) for t, df in doc_freq.items()}
    if not idf:
        return idf
    floor = epsilon * (sum(idf.values()) / len(idf))
    return {t: (floor if v < 0 else v) for t, v in idf.items()}


def _bm25l_idf(doc_freq: dict[str, int], n: int) -> dict[str, float]:
    return {t: math.log(n + 1) - math.log(df + 0.5) for t, df in doc_freq.items()}


def build_sparse_index(
    docs: Sequence[Document] | Sequence[tuple[str, list[str]]],
    variant: str = "bm25",
    params: SparseParams | None = None,
) -> SparseIndex:
    """Index documents, or pre-tokenized ``(doc_id, tokens)`` pairs."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown sparse variant {variant!r}")
    if not docs:
        raise ValueError("cannot build a sparse index over an empty corpus")
    params = params or SparseParams()
    doc_ids, doc_len, term_freq = [], {}, {}
    doc_freq: Counter = Counter()
    for doc in docs:
        if isinstance(doc, Document):
            doc_id, tokens = doc.doc_id, tokenize(doc.text)
        else:
            doc_id, tokens = doc
        if doc_id in doc_len:
            raise ValueError(f"duplicate doc_id {doc_id!r}")
        tf = Counter(tokens)
        doc_ids.append(doc_id)
        doc_len[doc_id] = len(tokens)
        term_freq[doc_id] = tf
        doc_freq.update(tf.keys())
    n = len(doc_ids)
    df = dict(doc_freq)
    idf = _okapi_idf(df, n, params.epsilon) if variant == "bm25" else _bm25l_idf(df, n)
    return SparseIndex(variant, params, doc_ids, doc_len, term_freq, df, idf)


def sparse_scores(index: SparseIndex, query: Sequence[str]) -> dict[str, float]:
    """Score every indexed document; repeated query terms count repeatedly."""
    p = index.params
    avgdl = index.avg_doc_len
    scores = {}
    for doc_id in index.doc_ids:
        tf = index.term_freq[doc_id]
        norm = (1 - p.b + p.b * index.doc_len[doc_id] / avgdl) if avgdl > 0 else 1.0
        s = 0.0
        for q in query:
            idf = index.idf.get(q, 0.0)
            f = tf.get(q, 0)
            if index.variant == "bm25":
                s += idf * (f * (p.k1 + 1) / (f + p.k1 * norm))
            else:
                ctd = f / norm
                s += idf * (p.k1 + 1) * (ctd + p.delta) / (p.k1 + ctd + p.delta)
        scores[doc_id] = s
    return scores


def sparse_search(index: SparseIndex, query: Sequence[str] | str, k: int, query_id: str = "") -> RankedList:
    if k < 1:
        raise ValueError("k must be >= 1")
    tokens = tokenize(query) if isinstance(query, str) else list(query)
    return RankedList.from_scores(query_id, sparse_scores(index, tokens), index.variant, k)
