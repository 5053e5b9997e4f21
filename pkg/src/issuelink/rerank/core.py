"""Reranking a short candidate list and building hard-negative training pairs."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

from ..ranking import RankedList

logger = logging.getLogger(__name__)

RERANK_K = 20
HARD_NEGATIVES = 10
FAILED_SCORE = -math.inf


@dataclass(frozen=True)
class TrainingPair:
    query_id: str
    commit_hash: str
    label: int


def make_training_set(
    train_query_ids: Iterable[str],
    relevant: Mapping[str, Iterable[str]],
    rankings: Mapping[str, RankedList],
    n_negatives: int = HARD_NEGATIVES,
) -> list[TrainingPair]:
    """Every true link of each training issue as a positive, plus the top
    ``n_negatives`` retrieved non-links as hard negatives in retrieval order."""
    pairs: list[TrainingPair] = []
    for qid in train_query_ids:
        positives = sorted(set(relevant.get(qid, ())))
        pairs.extend(TrainingPair(qid, h, 1) for h in positives)
        ranked = rankings.get(qid)
        if ranked is None or len(ranked) == 0:
            logger.warning("%s: empty candidate pool, positives only", qid)
            continue
        truth = set(positives)
        negatives = [d for d in ranked.doc_ids if d not in truth][:n_negatives]
        pairs.extend(TrainingPair(qid, h, 0) for h in negatives)
    return pairs


def rerank_with_model(
    scorer: Callable[[str], float],
    candidates: RankedList,
    k: int = RERANK_K,
    name: str = "rerank",
) -> RankedList:
    """Reorder the first ``k`` candidates by ``scorer(doc_id)``, highest first.

    Ties keep retrieval order. A pair whose scorer raises gets ``FAILED_SCORE``
    and sinks to the bottom rather than aborting the issue.
    """
    scored = []
    for rank, doc_id in enumerate(candidates.doc_ids[:k]):
        try:
            s = float(scorer(doc_id))
            if math.isnan(s):
                raise ValueError("scorer returned NaN")
        except Exception as exc:  # any scorer failure is contained per pair
            logger.warning("%s: scoring %s failed: %s", candidates.query_id, doc_id, exc)
            s = FAILED_SCORE
        scored.append((-s, rank, doc_id, s))
    scored.sort()
    return RankedList(candidates.query_id, tuple((d, s) for _, _, d, s in scored), name)


def rerank_with_scores(
    scores: Mapping[str, float] | None, candidates: RankedList, k: int = RERANK_K, name: str = "rerank"
) -> RankedList:
    """``rerank_with_model`` for precomputed scores; ``None`` means the batch
    failed, and the retrieval order is kept under ``<name>:fallback``."""
    if scores is None:
        top = candidates.top(k)
        n = len(top)
        return RankedList(top.query_id, tuple((d, float(n - i)) for i, d in enumerate(top.doc_ids)), f"{name}:fallback")
    return rerank_with_model(scores.__getitem__, candidates, k, name)
