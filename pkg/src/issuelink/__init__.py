"""Recovering missing issue-commit links: temporal candidate windows,
sparse/dense retrieval with rank fusion, reranking, and ranking metrics."""

__version__ = "0.1.0"
