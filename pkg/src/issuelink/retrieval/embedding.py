"""Embedding providers: a remote HTTP endpoint and an offline hashing embedder."""

from __future__ import annotations

import hashlib
import logging
import os
from collections import Counter
from typing import Iterable, Protocol, Sequence

import httpx
import numpy as np

from ..corpus import Document
from ..text import tokenize

logger = logging.getLogger(__name__)

DEFAULT_DIM = 384
EMBED_URL_ENV = "ISSUELINK_EMBED_URL"
EMBED_TOKEN_ENV = "ISSUELINK_EMBED_TOKEN"


class EmbeddingError(RuntimeError):
    """Provider failure. Retriable: the same call may succeed later."""

    retriable = True

    def __init__(self, message: str, doc_id: str | None = None):
        super().__init__(message if doc_id is None else f"{message} (doc_id={doc_id})")
        self.doc_id = doc_id


class EmbeddingProvider(Protocol):
    dim: int
    name: str

    def embed(self, text: str) -> np.ndarray: ...

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]: ...


def _unit(v: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(v))
    if norm == 0.0 or not np.isfinite(norm):
        raise EmbeddingError("embedding has zero or non-finite norm")
    return v / norm


class HashingEmbedder:
    """Signed feature hashing of tokens into ``dim`` buckets, L2-normalized.

    Deterministic across processes (blake2b, not ``hash()``). Token-disjoint
    texts are near-orthogonal; only bucket collisions make them overlap.
    """

    name = "hashing"

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim < 2:
            raise ValueError("dim must be >= 2")
        self.dim = dim
        self._cache: dict[str, tuple[int, float]] = {}

    def _slot(self, token: str) -> tuple[int, float]:
        slot = self._cache.get(token)
        if slot is None:
            digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
            h = int.from_bytes(digest, "little")
            slot = (h % self.dim, 1.0 if (h >> 63) & 1 else -1.0)
            self._cache[token] = slot
        return slot

    def embed(self, text: str) -> np.ndarray:
        counts = Counter(tokenize(text)) or Counter({"<empty>": 1})
        v = np.zeros(self.dim, dtype=np.float64)
        for tok, n in counts.items():
            idx, sign = self._slot(tok)
            v[idx] += sign * (1.0 + np.log(n))
        if not v.any():
            # every token cancelled out in shared buckets
            v[self._slot("<empty>")[0]] = 1.0
        return _unit(v)

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [self.embed(t) for t in texts]


class HttpEmbeddingProvider:
    """POST ``{"texts": [...]}`` and expect ``{"vectors": [[...], ...]}`` back."""

    name = "http"

    def __init__(
        self,
        url: str | None = None,
        dim: int = DEFAULT_DIM,
        token: str | None = None,
        timeout: float = 30.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.url = url or os.environ.get(EMBED_URL_ENV)
        if not self.url:
            raise ValueError(f"no embeddings endpoint configured (set {EMBED_URL_ENV})")
        self.dim = dim
        token = token if token is not None else os.environ.get(EMBED_TOKEN_ENV)
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        try:
            resp = self._client.post(self.url, json={"texts": list(texts)})
            resp.raise_for_status()
            vectors = resp.json()["vectors"]
        except (httpx.HTTPError, ValueError, KeyError, TypeError) as exc:
            raise EmbeddingError(f"embeddings endpoint failed: {exc}") from exc
        if len(vectors) != len(texts):
            raise EmbeddingError(f"endpoint returned {len(vectors)} vectors for {len(texts)} texts")
        out = []
        for vec in vectors:
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (self.dim,):
                raise EmbeddingError(f"expected dim {self.dim}, got shape {arr.shape}")
            out.append(_unit(arr))
        return out

    def embed(self, text: str) -> np.ndarray:
        return self.embed_batch([text])[0]

    def close(self) -> None:
        self._client.close()


def embed_documents(
    provider: EmbeddingProvider, docs: Iterable[Document], batch_size: int = 64
) -> dict[str, np.ndarray]:
    """One unit vector per document, keyed by doc_id."""
    docs = list(docs)
    out: dict[str, np.ndarray] = {}
    for start in range(0, len(docs), batch_size):
        batch = docs[start : start + batch_size]
        try:
            vectors = provider.embed_batch([d.text for d in batch])
        except EmbeddingError as exc:
            raise EmbeddingError(str(exc), doc_id=batch[0].doc_id) from exc
        for d, v in zip(batch, vectors):
            out[d.doc_id] = v
    return out


class EmbeddingCache:
    """Memoizes document vectors across per-issue pools; thread-safe enough for
    the orchestrator since a doc_id always maps to the same vector."""

    def __init__(self, provider: EmbeddingProvider):
        self.provider = provider
        self._vectors: dict[str, np.ndarray] = {}

    def vectors_for(self, docs: Sequence[Document]) -> dict[str, np.ndarray]:
        missing = [d for d in docs if d.doc_id not in self._vectors]
        if missing:
            self._vectors.update(embed_documents(self.provider, missing))
        return {d.doc_id: self._vectors[d.doc_id] for d in docs}

    def query(self, text: str) -> np.ndarray:
        return self.provider.embed(text)
