"""TF-IDF similarity scorer with a recall-targeted decision threshold."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..text import tokenize
from .features import TfidfModel

logger = logging.getLogger(__name__)

TARGET_RECALL = 0.9
MIN_POSITIVES = 10


def frlink_score(query: str, doc_text: str, tfidf: TfidfModel) -> float:
    """Cosine of the TF-IDF vectors of an issue query and a commit document,
    weighted by the pool vocabulary in ``tfidf``."""
    q = tokenize(query)
    if not q:
        logger.warning("empty issue query; frlink score is 0")
        return 0.0
    return tfidf.cosine(q, tokenize(doc_text))


def frlink_threshold(positive_scores: Sequence[float], target_recall: float = TARGET_RECALL) -> float:
    """Lower 10th percentile of the positive training scores (for the default
    0.9 recall target): at least that share of positives scores at or above it."""
    scores = np.sort(np.asarray(positive_scores, dtype=np.float64))
    if len(scores) < MIN_POSITIVES:
        raise ValueError(f"need at least {MIN_POSITIVES} positive pairs, got {len(scores)}")
    return float(np.percentile(scores, round((1 - target_recall) * 100, 9), method="lower"))


@dataclass(frozen=True)
class FRLinkModel:
    threshold: float
    n_positives: int
    target_recall: float = TARGET_RECALL

    def is_link(self, score: float) -> bool:
        return score >= self.threshold

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(
                {"format_version": 1, "threshold": self.threshold, "n_positives": self.n_positives,
                 "target_recall": self.target_recall},
                sort_keys=True,
            ),
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "FRLinkModel":
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        if d.get("format_version") != 1:
            raise ValueError("unsupported frlink model format")
        return cls(d["threshold"], d["n_positives"], d["target_recall"])
