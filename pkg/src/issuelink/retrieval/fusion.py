"""Reciprocal rank fusion."""

from __future__ import annotations

import math
from typing import Sequence

from ..ranking import RankedList

DEFAULT_RRF_K = 60
DEFAULT_TOP_N = 50


def rrf_scores(lists: Sequence[RankedList], rrf_k: int = DEFAULT_RRF_K) -> dict[str, float]:
    # fsum is correctly rounded, so the sum does not depend on list order
    parts: dict[str, list[float]] = {}
    for ranked in lists:
        for rank, doc_id in enumerate(ranked.doc_ids, start=1):
            parts.setdefault(doc_id, []).append(1.0 / (rrf_k + rank))
    return {d: math.fsum(p) for d, p in parts.items()}


def rrf_fuse(
    lists: Sequence[RankedList], rrf_k: int = DEFAULT_RRF_K, top_n: int = DEFAULT_TOP_N, query_id: str | None = None
) -> RankedList:
    """Sum ``1/(rrf_k + rank)`` over the lists that contain each doc; keep ``top_n``.

    Ranks are 1-based positions in each input list.
    """
    if not lists:
        raise ValueError("rrf_fuse needs at least one ranked list")
    qid = query_id if query_id is not None else lists[0].query_id
    return RankedList.from_scores(qid, rrf_scores(lists, rrf_k), "rrf", top_n)
