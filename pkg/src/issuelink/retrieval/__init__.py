from ..text import STOPWORDS, tokenize
from .embedding import (
    DEFAULT_DIM,
    EmbeddingCache,
    EmbeddingError,
    EmbeddingProvider,
    HashingEmbedder,
    HttpEmbeddingProvider,
    embed_documents,
)
from .fusion import rrf_fuse, rrf_scores
from .pipeline import RETRIEVERS, PoolRetriever, RetrieverConfig, retrieve_for_issue
from .sparse import SparseIndex, SparseParams, build_sparse_index, sparse_scores, sparse_search
from .vector import VectorIndex, build_vector_index, load_vector_index, save_vector_index, vector_search

__all__ = [
    "DEFAULT_DIM",
    "STOPWORDS",
    "RETRIEVERS",
    "EmbeddingCache",
    "EmbeddingError",
    "EmbeddingProvider",
    "HashingEmbedder",
    "HttpEmbeddingProvider",
    "PoolRetriever",
    "RetrieverConfig",
    "SparseIndex",
    "SparseParams",
    "VectorIndex",
    "build_sparse_index",
    "build_vector_index",
    "embed_documents",
    "load_vector_index",
    "retrieve_for_issue",
    "rrf_fuse",
    "rrf_scores",
    "save_vector_index",
    "sparse_scores",
    "sparse_search",
    "tokenize",
    "vector_search",
]
