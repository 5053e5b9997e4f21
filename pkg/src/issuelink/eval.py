"""Chronological splits, test sampling and ranking metrics.

Relevance is binary. MRR@K is the reciprocal rank of the first relevant
document truncated at K (0 beyond K); the untruncated value is reported as
``MRR@inf``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import IssueRecord
from .ranking import RankedList

DEFAULT_KS = (1, 5, 10, 20, 30, 50)
METRICS = ("P", "Hit", "R", "MRR", "NDCG")
RERANK_COLUMNS = (
    "P@1", "R@1", "P@10", "Hit@10", "R@10", "MRR@10", "NDCG@10",
    "P@20", "Hit@20", "R@20", "MRR@20", "NDCG@20",
)
RETRIEVAL_COLUMNS = RERANK_COLUMNS + ("R@30", "R@50")

Judgments = Mapping[str, frozenset[str] | set[str]]


@dataclass(frozen=True)
class ChronoSplit:
    train_issue_keys: frozenset[str]
    test_issue_keys: frozenset[str]
    boundary_timestamp: datetime
    ratio: float = 0.2


def chrono_split(issues: Sequence[IssueRecord], ratio: float = 0.2) -> ChronoSplit:
    """Newest ``ceil(ratio * n)`` issues form the test set; ties ordered by key."""
    if len(issues) < 5:
        raise ValueError(f"need at least 5 issues for a chronological split, got {len(issues)}")
    if not 0 < ratio < 1:
        raise ValueError("ratio must be in (0, 1)")
    ordered = sorted(issues, key=lambda i: (i.created_at, i.issue_key))
    n_test = math.ceil(round(ratio * len(ordered), 9))
    cut = len(ordered) - n_test
    if cut == 0:
        raise ValueError(f"ratio {ratio} puts all {len(ordered)} issues in the test set")
    return ChronoSplit(
        train_issue_keys=frozenset(i.issue_key for i in ordered[:cut]),
        test_issue_keys=frozenset(i.issue_key for i in ordered[cut:]),
        boundary_timestamp=ordered[cut].created_at,
        ratio=ratio,
    )


def sample_test(test_keys: Iterable[str], n: int = 1000, repeats: int = 5, seed: int = 0) -> list[list[str]]:
    """Whole test set if it has at most ``n`` issues, else ``repeats`` seeded
    samples of size ``n`` without replacement. Keys inside a sample are sorted."""
    keys = sorted(set(test_keys))
    if len(keys) <= n:
        return [keys]
    rng = np.random.default_rng(seed)
    return [sorted(keys[i] for i in rng.choice(len(keys), size=n, replace=False)) for _ in range(repeats)]


def _first_relevant_rank(doc_ids: Sequence[str], relevant) -> int | None:
    for i, d in enumerate(doc_ids, start=1):
        if d in relevant:
            return i
    return None


def metrics_at_k(ranked: RankedList | Sequence[str], relevant: Iterable[str], k: int) -> dict[str, float]:
    """Per-query precision, hit, recall, reciprocal rank and NDCG at cutoff ``k``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    relevant = set(relevant)
    if not relevant:
        raise ValueError("query has no relevant documents")
    doc_ids = ranked.doc_ids if isinstance(ranked, RankedList) else list(ranked)
    top = doc_ids[:k]
    gains = [1 if d in relevant else 0 for d in top]
    rel = sum(gains)
    first = _first_relevant_rank(doc_ids, relevant)
    dcg = sum(g / math.log2(i + 1) for i, g in enumerate(gains, start=1))
    idcg = sum(1 / math.log2(i + 1) for i in range(1, min(len(relevant), k) + 1))
    return {
        "precision": rel / k,
        "hit": 1.0 if first is not None and first <= k else 0.0,
        "recall": rel / len(relevant),
        "mrr": 1.0 / first if first is not None and first <= k else 0.0,
        "ndcg": dcg / idcg,
    }


def reciprocal_rank(ranked: RankedList | Sequence[str], relevant: Iterable[str]) -> float:
    """Untruncated reciprocal rank of the first relevant document (0 if none)."""
    doc_ids = ranked.doc_ids if isinstance(ranked, RankedList) else list(ranked)
    first = _first_relevant_rank(doc_ids, set(relevant))
    return 0.0 if first is None else 1.0 / first


_SHORT = {"precision": "P", "hit": "Hit", "recall": "R", "mrr": "MRR", "ndcg": "NDCG"}


def query_row(ranked: RankedList | Sequence[str], relevant: Iterable[str], ks: Sequence[int]) -> dict[str, float]:
    relevant = set(relevant)
    row: dict[str, float] = {}
    for k in ks:
        for name, value in metrics_at_k(ranked, relevant, k).items():
            row[f"{_SHORT[name]}@{k}"] = value
    row["MRR@inf"] = reciprocal_rank(ranked, relevant)
    return row


@dataclass
class EvaluationReport:
    name: str
    metrics: dict[str, float]
    n_queries: int
    per_sample: list[dict[str, float]]
    per_query: list[dict] = field(repr=False, default_factory=list)
    excluded_queries: int = 0
    config_fingerprint: str = ""
    ks: tuple[int, ...] = DEFAULT_KS

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "config_fingerprint": self.config_fingerprint,
            "ks": list(self.ks),
            "n_queries": self.n_queries,
            "excluded_queries": self.excluded_queries,
            "metrics": self.metrics,
            "per_sample": self.per_sample,
            "per_query": self.per_query,
        }


def _mean_rows(rows: Sequence[Mapping[str, float]], columns: Sequence[str]) -> dict[str, float]:
    return {c: math.fsum(r[c] for r in rows) / len(rows) for c in columns}


def evaluate_run(
    ranked_lists: Mapping[str, RankedList] | Iterable[RankedList],
    judgments: Judgments,
    ks: Sequence[int] = DEFAULT_KS,
    samples: Sequence[Sequence[str]] | None = None,
    name: str = "",
    config_fingerprint: str = "",
) -> EvaluationReport:
    """Mean metrics per sample, then the mean over samples.

    Judged queries without a ranked list score zero. Queries without
    judgments are excluded and counted.
    """
    if not isinstance(ranked_lists, Mapping):
        ranked_lists = {r.query_id: r for r in ranked_lists}
    if samples is None:
        samples = [sorted(judgments)]
    excluded = {q for q in ranked_lists if q not in judgments}
    per_query: list[dict] = []
    per_sample: list[dict[str, float]] = []
    columns: list[str] | None = None
    seen: set[str] = set()
    for sid, sample in enumerate(samples):
        rows = []
        for qid in sample:
            if qid not in judgments:
                excluded.add(qid)
                continue
            ranked = ranked_lists.get(qid) or RankedList(qid)
            row = query_row(ranked, judgments[qid], ks)
            columns = columns or list(row)
            rows.append(row)
            per_query.append({"sample": sid, "query_id": qid, **row})
        if rows:
            per_sample.append(_mean_rows(rows, columns))
            seen.update(r["query_id"] for r in per_query if r["sample"] == sid)
    if not per_sample:
        raise ValueError("no judged queries to evaluate")
    metrics = {c: math.fsum(s[c] for s in per_sample) / len(per_sample) for c in columns}
    return EvaluationReport(
        name=name,
        metrics=metrics,
        n_queries=len(seen),
        per_sample=per_sample,
        per_query=per_query,
        excluded_queries=len(excluded),
        config_fingerprint=config_fingerprint,
        ks=tuple(ks),
    )


def judgments_from_links(links: Iterable, query_ids: Iterable[str] | None = None) -> dict[str, frozenset[str]]:
    """Relevant commit hashes per query id ``<project>/<issue_key>``."""
    out: dict[str, set[str]] = {}
    for link in links:
        out.setdefault(query_id(link.project_id, link.issue_key), set()).add(link.commit_hash)
    if query_ids is not None:
        wanted = set(query_ids)
        out = {q: v for q, v in out.items() if q in wanted}
    return {q: frozenset(v) for q, v in sorted(out.items())}


def query_id(project_id: str, issue_key: str) -> str:
    return f"{project_id}/{issue_key}"


def format_table(reports: Sequence[EvaluationReport], columns: Sequence[str] = RERANK_COLUMNS) -> str:
    """Fixed-width table, one row per report, columns in the order given."""
    cols = [c for c in columns if reports and c in reports[0].metrics]
    header = ["system", "N", *cols]
    rows = [header] + [
        [r.name, str(r.n_queries), *(f"{r.metrics[c]:.3f}" for c in cols)] for r in reports
    ]
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = ["  ".join(cell.rjust(w) if i else cell.ljust(w) for i, (cell, w) in enumerate(zip(row, widths))) for row in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)
