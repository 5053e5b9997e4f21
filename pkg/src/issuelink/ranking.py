"""The ranked list passed between retrievers, fusers, rerankers and evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping


@dataclass(frozen=True)
class RankedList:
    query_id: str
    entries: tuple[tuple[str, float], ...] = ()
    provenance: str = ""

    def __post_init__(self):
        ids = [d for d, _ in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate doc_ids in ranked list for {self.query_id!r}")

    @classmethod
    def from_scores(
        cls, query_id: str, scores: Mapping[str, float], provenance: str, k: int | None = None
    ) -> "RankedList":
        """Sort by score descending, ties by ascending doc_id, keep the top ``k``."""
        ordered = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
        if k is not None:
            ordered = ordered[:k]
        return cls(query_id, tuple((d, float(s)) for d, s in ordered), provenance)

    @property
    def doc_ids(self) -> list[str]:
        return [d for d, _ in self.entries]

    def __len__(self):
        return len(self.entries)

    def top(self, k: int) -> "RankedList":
        return RankedList(self.query_id, self.entries[:k], self.provenance)

    def rank_of(self, doc_id: str) -> int | None:
        """1-based rank of ``doc_id`` or None."""
        for i, (d, _) in enumerate(self.entries, start=1):
            if d == doc_id:
                return i
        return None

    def to_dict(self) -> dict:
        # JSON has no infinities; failed rerank sentinels become null
        return {
            "query_id": self.query_id,
            "provenance": self.provenance,
            "entries": [[d, s if math.isfinite(s) else None] for d, s in self.entries],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RankedList":
        entries = tuple((doc, float(s) if s is not None else -math.inf) for doc, s in d["entries"])
        return cls(d["query_id"], entries, d.get("provenance", ""))


def empty(query_id: str, provenance: str) -> RankedList:
    return RankedList(query_id, (), provenance)


def as_entries(pairs: Iterable[tuple[str, float]]) -> tuple[tuple[str, float], ...]:
    return tuple((d, float(s)) for d, s in pairs)
