"""Per-issue retrieval: index the candidate pool, query it, optionally fuse."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from ..corpus import Document
from ..ranking import RankedList
from ..text import tokenize
from .embedding import EmbeddingCache
from .fusion import DEFAULT_RRF_K, rrf_fuse
from .sparse import SparseIndex, SparseParams, build_sparse_index, sparse_scores
from .vector import KINDS, build_vector_index, vector_search

logger = logging.getLogger(__name__)

SPARSE = ("bm25", "bm25l")
DENSE = KINDS
RETRIEVERS = SPARSE + DENSE + ("rrf",)


@dataclass(frozen=True)
class RetrieverConfig:
    """One retriever. ``params`` go to the sparse or vector index builder.

    For ``rrf``, ``fuse`` names the sub-retrievers (each run with the same k).
    ``idf_scope="global"`` scores sparse variants with project-wide statistics
    instead of the pool's own.
    """

    name: str
    k: int = 50
    params: Mapping[str, Any] = field(default_factory=dict)
    fuse: tuple[str, ...] = ("bm25", "flat")
    rrf_k: int = DEFAULT_RRF_K
    idf_scope: str = "pool"

    def __post_init__(self):
        if self.name not in RETRIEVERS:
            raise ValueError(f"unknown retriever {self.name!r}; choose from {RETRIEVERS}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.name == "rrf" and (not self.fuse or any(f not in SPARSE + DENSE for f in self.fuse)):
            raise ValueError(f"rrf can only fuse {SPARSE + DENSE}")
        if self.idf_scope not in ("pool", "global"):
            raise ValueError("idf_scope must be 'pool' or 'global'")

    @property
    def needs_embeddings(self) -> bool:
        names = self.fuse if self.name == "rrf" else (self.name,)
        return any(n in DENSE for n in names)


class PoolRetriever:
    """Runs several retrievers over one issue's pool, sharing tokenization,
    indexes and embeddings between them."""

    def __init__(
        self,
        query_id: str,
        query: str,
        pool: Sequence[Document],
        embeddings: EmbeddingCache | None = None,
        global_sparse: Mapping[str, SparseIndex] | None = None,
        params: Mapping[str, Mapping[str, Any]] | None = None,
    ):
        self.query_id = query_id
        self.query = query
        self.tokens = tokenize(query)
        self.pool = list(pool)
        self.embeddings = embeddings
        self.global_sparse = global_sparse or {}
        self.params = params or {}
        self._cache: dict[tuple, RankedList] = {}
        self._query_vec = None

    def _sparse(self, variant: str, k: int, scope: str) -> RankedList:
        if scope == "global" and variant in self.global_sparse:
            index = self.global_sparse[variant]
            allowed = {d.doc_id for d in self.pool}
            scores = {d: s for d, s in sparse_scores(index, self.tokens).items() if d in allowed}
            return RankedList.from_scores(self.query_id, scores, variant, k)
        p = self.params.get(variant, {})
        index = build_sparse_index(self.pool, variant, SparseParams(**p) if p else None)
        return RankedList.from_scores(self.query_id, sparse_scores(index, self.tokens), variant, k)

    def _dense(self, kind: str, k: int) -> RankedList:
        if self.embeddings is None:
            raise ValueError(f"retriever {kind!r} needs an embedding provider")
        vectors = self.embeddings.vectors_for(self.pool)
        index = build_vector_index({d.doc_id: vectors[d.doc_id] for d in self.pool}, kind, self.params.get(kind))
        if self._query_vec is None:
            self._query_vec = self.embeddings.query(self.query)
        return vector_search(index, self._query_vec, k, query_id=self.query_id)

    def run(self, name: str, k: int, scope: str = "pool") -> RankedList:
        key = (name, k, scope)
        if key not in self._cache:
            if name in SPARSE:
                self._cache[key] = self._sparse(name, k, scope)
            else:
                self._cache[key] = self._dense(name, k)
        return self._cache[key]

    def retrieve(self, config: RetrieverConfig) -> RankedList:
        if not self.pool:
            logger.warning("empty candidate pool for %s", self.query_id)
            return RankedList(self.query_id, (), config.name)
        if config.name != "rrf":
            return self.run(config.name, config.k, config.idf_scope)
        subs = [self.run(n, config.k, config.idf_scope) for n in config.fuse]
        return rrf_fuse(subs, rrf_k=config.rrf_k, top_n=config.k, query_id=self.query_id)


def retrieve_for_issue(
    query_id: str,
    query: str,
    pool: Sequence[Document],
    config: RetrieverConfig,
    embeddings: EmbeddingCache | None = None,
) -> RankedList:
    """Index ``pool`` and rank it for ``query`` with one configured retriever."""
    params = {config.name: config.params} if config.name != "rrf" else {}
    return PoolRetriever(query_id, query, pool, embeddings, params=params).retrieve(config)
