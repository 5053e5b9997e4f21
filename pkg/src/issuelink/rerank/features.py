"""Issue-commit pair features for the forest reranker.

Eight textual and eight metadata features. The schema is versioned; a model
trained on one version refuses features of another.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..corpus import CommitRecord, Document, IssueRecord
from ..text import tokenize
from ..timeutil import SECONDS_PER_DAY, days_between

FEATURE_SCHEMA_VERSION = "2024.1-16"

TEXTUAL_FEATURES = (
    "tfidf_cosine_message",
    "tfidf_cosine_code",
    "token_jaccard",
    "shared_tokens",
    "shared_rare_tokens",
    "query_length",
    "doc_length",
    "bm25_score",
)
METADATA_FEATURES = (
    "days_since_creation",
    "days_to_closure",
    "within_closure_buffer",
    "author_is_reporter",
    "author_is_assignee",
    "changed_files",
    "changed_methods",
    "rrf_score",
)
FEATURE_NAMES = TEXTUAL_FEATURES + METADATA_FEATURES
RARE_DOC_FREQ = 2


class TfidfModel:
    """Smoothed TF-IDF, ``idf = ln((1 + N) / (1 + df)) + 1``, raw term counts.

    Terms outside the fitted vocabulary are ignored when vectorizing.
    """

    def __init__(self, token_lists: Sequence[Sequence[str]]):
        self.n_docs = len(token_lists)
        df: Counter = Counter()
        for toks in token_lists:
            df.update(set(toks))
        self.doc_freq = dict(df)
        self.idf = {t: math.log((1 + self.n_docs) / (1 + c)) + 1 for t, c in df.items()}

    def vector(self, tokens: Sequence[str]) -> dict[str, float]:
        return {t: n * self.idf[t] for t, n in Counter(tokens).items() if t in self.idf}

    def cosine(self, a: Sequence[str], b: Sequence[str]) -> float:
        va, vb = self.vector(a), self.vector(b)
        if not va or not vb:
            return 0.0
        dot = sum(w * vb.get(t, 0.0) for t, w in va.items())
        na = math.sqrt(sum(w * w for w in va.values()))
        nb = math.sqrt(sum(w * w for w in vb.values()))
        return dot / (na * nb)


@dataclass
class PoolContext:
    """Per-issue statistics shared by every candidate of that issue."""

    query: str
    query_tokens: list[str]
    tfidf: TfidfModel
    bm25_scores: Mapping[str, float] = field(default_factory=dict)
    rrf_scores: Mapping[str, float] = field(default_factory=dict)
    closure_buffer_days: int = 30

    @classmethod
    def build(
        cls,
        query: str,
        docs: Sequence[Document],
        bm25_scores: Mapping[str, float] | None = None,
        rrf_scores: Mapping[str, float] | None = None,
        closure_buffer_days: int = 30,
    ) -> "PoolContext":
        return cls(
            query=query,
            query_tokens=tokenize(query),
            tfidf=TfidfModel([tokenize(d.text) for d in docs]),
            bm25_scores=bm25_scores or {},
            rrf_scores=rrf_scores or {},
            closure_buffer_days=closure_buffer_days,
        )


@dataclass
class FeatureVector:
    values: np.ndarray
    label: int | None = None
    names: tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self):
        if self.values.shape != (len(self.names),):
            raise ValueError(f"expected {len(self.names)} features, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            bad = [n for n, v in zip(self.names, self.values) if not math.isfinite(v)]
            raise ValueError(f"non-finite features: {bad}")

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values.tolist()))


def _same_person(a: str | None, b: str | None) -> bool:
    return bool(a) and bool(b) and a.strip().lower() == b.strip().lower()


def extract_features(
    issue: IssueRecord, commit: CommitRecord, doc: Document, ctx: PoolContext, label: int | None = None
) -> FeatureVector:
    q = ctx.query_tokens
    d_tokens = tokenize(doc.text)
    qs, ds = set(q), set(d_tokens)
    shared = qs & ds
    union = qs | ds
    rare = sum(1 for t in shared if ctx.tfidf.doc_freq.get(t, 0) <= RARE_DOC_FREQ)

    closed = issue.usable_closed_at
    if closed is not None:
        to_closure = days_between(commit.committed_at, closed)
        in_buffer = abs((commit.committed_at - closed).total_seconds()) <= ctx.closure_buffer_days * SECONDS_PER_DAY
    else:
        to_closure, in_buffer = 0.0, False

    values = [
        ctx.tfidf.cosine(q, tokenize(doc.message)),
        ctx.tfidf.cosine(q, tokenize(doc.code_terms)),
        len(shared) / len(union) if union else 0.0,
        float(len(shared)),
        float(rare),
        float(len(q)),
        float(doc.token_count),
        float(ctx.bm25_scores.get(doc.doc_id, 0.0)),
        days_between(issue.created_at, commit.committed_at),
        to_closure,
        1.0 if in_buffer else 0.0,
        1.0 if _same_person(commit.author, issue.reporter) else 0.0,
        1.0 if _same_person(commit.author, issue.assignee) else 0.0,
        float(len(commit.file_changes)),
        float(sum(len(fc.methods) for fc in commit.file_changes)),
        float(ctx.rrf_scores.get(doc.doc_id, 0.0)),
    ]
    return FeatureVector(np.array(values, dtype=np.float64), label)
