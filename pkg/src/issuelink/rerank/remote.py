"""Remote scorers: a chat-completions list reranker and a pairwise scoring endpoint.

Both retry transport and HTTP failures with exponential backoff. Callers
fall back to retrieval order (or a sentinel score) once retries run out,
so a dead endpoint degrades results instead of aborting a run.
"""

from __future__ import annotations

import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence, TypeVar

import httpx

from ..ranking import RankedList

logger = logging.getLogger(__name__)

LLM_URL_ENV = "ISSUELINK_LLM_URL"
LLM_KEY_ENV = "ISSUELINK_LLM_API_KEY"
LLM_MODEL_ENV = "ISSUELINK_LLM_MODEL"
SCORER_URL_ENV = "ISSUELINK_SCORER_URL"
SCORER_KEY_ENV = "ISSUELINK_SCORER_TOKEN"

MAX_CANDIDATES = 20
DEFAULT_CHAR_BUDGET = 1000
MIN_PREFIX = 7

PROMPT_VERSION = "1"
PROMPT_TEMPLATE = """\
You are given an issue report and a list of candidate commits from the same \
software repository. Re-rank the commits by how likely each one resolves the \
issue, most relevant first.

Return only the list of ordered commit ids, one per line, with no \
explanations.

Issue:
{issue}

Commits:
{commits}
"""

T = TypeVar("T")


class RemoteScorerError(RuntimeError):
    pass


@dataclass(frozen=True)
class RetryPolicy:
    max_retries: int = 3
    backoff: float = 0.5
    factor: float = 2.0

    def delays(self) -> Iterable[float]:
        for attempt in range(self.max_retries):
            yield self.backoff * self.factor**attempt


class _HttpEndpoint:
    def __init__(
        self,
        url: str,
        token: str | None,
        timeout: float,
        retry: RetryPolicy | None,
        min_interval: float,
        transport: httpx.BaseTransport | None,
    ):
        self.url = url
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)
        self.retry = retry or RetryPolicy()
        self.min_interval = min_interval
        self._lock = threading.Lock()
        self._last = 0.0

    def _throttle(self) -> None:
        if self.min_interval <= 0:
            return
        with self._lock:
            wait = self._last + self.min_interval - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            self._last = time.monotonic()

    def post(self, payload: dict) -> dict:
        delays = list(self.retry.delays())
        last_exc: Exception | None = None
        for attempt in range(len(delays) + 1):
            self._throttle()
            try:
                resp = self._client.post(self.url, json=payload)
                resp.raise_for_status()
                return resp.json()
            except (httpx.HTTPError, ValueError) as exc:
                last_exc = exc
                if attempt < len(delays):
                    logger.info("request to %s failed (%s); retry %d", self.url, exc, attempt + 1)
                    time.sleep(delays[attempt])
        raise RemoteScorerError(f"{self.url}: giving up after {len(delays) + 1} attempts: {last_exc}") from last_exc

    def close(self) -> None:
        self._client.close()


class ChatClient(_HttpEndpoint):
    """POSTs ``{model, messages}`` and reads the reply text.

    Accepts the common response shapes: ``choices[0].message.content``,
    ``choices[0].text``, or a top-level ``text``/``content``/``output_text``.
    """

    def __init__(
        self,
        url: str | None = None,
        model: str | None = None,
        api_key: str | None = None,
        timeout: float = 60.0,
        retry: RetryPolicy | None = None,
        min_interval: float = 0.0,
        transport: httpx.BaseTransport | None = None,
    ):
        url = url or os.environ.get(LLM_URL_ENV)
        if not url:
            raise ValueError(f"no chat endpoint configured (set {LLM_URL_ENV})")
        self.model = model or os.environ.get(LLM_MODEL_ENV, "")
        super().__init__(url, api_key if api_key is not None else os.environ.get(LLM_KEY_ENV),
                         timeout, retry, min_interval, transport)

    def complete(self, prompt: str) -> str:
        data = self.post({"model": self.model, "messages": [{"role": "user", "content": prompt}]})
        try:
            if "choices" in data:
                choice = data["choices"][0]
                text = choice["message"]["content"] if "message" in choice else choice["text"]
            else:
                text = next(data[k] for k in ("text", "content", "output_text") if k in data)
        except (KeyError, IndexError, TypeError, StopIteration) as exc:
            raise RemoteScorerError(f"unrecognized chat response: {str(data)[:200]}") from exc
        if not isinstance(text, str):
            raise RemoteScorerError("chat response text is not a string")
        return text


class PairwiseClient(_HttpEndpoint):
    """POSTs ``{"pairs": [[query, doc], ...]}`` and expects ``{"scores": [...]}``."""

    def __init__(
        self,
        url: str | None = None,
        token: str | None = None,
        timeout: float = 60.0,
        retry: RetryPolicy | None = None,
        min_interval: float = 0.0,
        transport: httpx.BaseTransport | None = None,
    ):
        url = url or os.environ.get(SCORER_URL_ENV)
        if not url:
            raise ValueError(f"no scoring endpoint configured (set {SCORER_URL_ENV})")
        super().__init__(url, token if token is not None else os.environ.get(SCORER_KEY_ENV),
                         timeout, retry, min_interval, transport)

    def score_pairs(self, pairs: Sequence[tuple[str, str]]) -> list[float]:
        data = self.post({"pairs": [[q, d] for q, d in pairs]})
        scores = data.get("scores") if isinstance(data, dict) else None
        if not isinstance(scores, list) or len(scores) != len(pairs):
            raise RemoteScorerError(f"expected {len(pairs)} scores from {self.url}")
        return [float(s) for s in scores]


def external_score(client: PairwiseClient, issue_text: str, commit_text: str) -> float:
    return client.score_pairs([(issue_text, commit_text)])[0]


# ---------------------------------------------------------------- LLM lists


@dataclass(frozen=True)
class RerankRequestBatch:
    query_id: str
    issue: str
    candidates: tuple[tuple[str, str], ...]

    def __post_init__(self):
        ids = [c for c, _ in self.candidates]
        if len(set(ids)) != len(ids):
            raise ValueError("candidate ids must be distinct")
        if len(ids) > MAX_CANDIDATES:
            raise ValueError(f"at most {MAX_CANDIDATES} candidates per request")

    @property
    def candidate_ids(self) -> list[str]:
        return [c for c, _ in self.candidates]


def render_prompt(batch: RerankRequestBatch, char_budget: int = DEFAULT_CHAR_BUDGET) -> tuple[str, int]:
    """Prompt text and the number of commit messages that were truncated."""
    truncated = 0
    lines = []
    for doc_id, message in batch.candidates:
        text = " ".join(message.split())
        if len(text) > char_budget:
            text = text[:char_budget]
            truncated += 1
        lines.append(f"[{doc_id}] {text}")
    return PROMPT_TEMPLATE.format(issue=batch.issue.strip(), commits="\n".join(lines)), truncated


_TOKEN = re.compile(r"[A-Za-z0-9_\-]+")


def parse_llm_order(raw: str | bytes, candidate_ids: Sequence[str]) -> list[str]:
    """Candidate ids in order of first mention in ``raw``, then the unmentioned
    ones in their original order. Always a permutation of ``candidate_ids``.

    A mention is a token equal to an id or a prefix (7+ chars) of exactly one id.
    """
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8", errors="replace")
    exact = set(candidate_ids)
    order: list[str] = []
    seen: set[str] = set()
    for tok in _TOKEN.findall(raw):
        match = None
        if tok in exact:
            match = tok
        elif len(tok) >= MIN_PREFIX:
            hits = [c for c in candidate_ids if c.startswith(tok)]
            if len(hits) == 1:
                match = hits[0]
        if match is not None and match not in seen:
            seen.add(match)
            order.append(match)
    order.extend(c for c in candidate_ids if c not in seen)
    return order


def _positional(query_id: str, ids: Sequence[str], provenance: str) -> RankedList:
    n = len(ids)
    return RankedList(query_id, tuple((d, float(n - i)) for i, d in enumerate(ids)), provenance)


def llm_rerank(
    client: ChatClient, batch: RerankRequestBatch, char_budget: int = DEFAULT_CHAR_BUDGET, name: str = "llm"
) -> RankedList:
    """Rerank with a chat model. On endpoint failure the retrieval order is
    returned with provenance ``<name>:fallback``."""
    prompt, truncated = render_prompt(batch, char_budget)
    if truncated:
        logger.info("%s: truncated %d commit messages to %d chars", batch.query_id, truncated, char_budget)
    try:
        raw = client.complete(prompt)
    except RemoteScorerError as exc:
        logger.warning("%s: LLM rerank failed, keeping retrieval order: %s", batch.query_id, exc)
        return _positional(batch.query_id, batch.candidate_ids, f"{name}:fallback")
    return _positional(batch.query_id, parse_llm_order(raw, batch.candidate_ids), name)


def pairwise_scores(client: PairwiseClient, issue_text: str, docs: Sequence[tuple[str, str]]) -> dict[str, float]:
    """Scores per doc_id for one issue, in one request. Raises RemoteScorerError."""
    scores = client.score_pairs([(issue_text, text) for _, text in docs])
    return {doc_id: s for (doc_id, _), s in zip(docs, scores)}


def bounded_map(fn: Callable[[T], object], items: Sequence[T], max_concurrency: int = 4) -> list:
    """``map`` over a thread pool of at most ``max_concurrency`` workers; results
    keep input order regardless of completion order."""
    if max_concurrency <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=max_concurrency) as pool:
        return list(pool.map(fn, items))
