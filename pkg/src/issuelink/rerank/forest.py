"""Random forest of Gini-split decision trees for binary link classification.

Leaves store the positive-class fraction of their training samples and the
forest score is the mean leaf fraction across trees, so scores are
probabilities in [0, 1] usable for ranking.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .features import FEATURE_NAMES, FEATURE_SCHEMA_VERSION, FeatureVector

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_leaf: int = 1
    features_per_split: int | None = None  # None -> ceil(sqrt(n_features))
    bootstrap: bool = True
    seed: int = 0


@dataclass
class Tree:
    """Flat array tree; ``feature[j] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.nonzero(active)[0]
            n = node[rows]
            go_left = X[rows, self.feature[n]] <= self.threshold[n]
            node[rows] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] >= 0
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            np.array(d["feature"], dtype=np.int64),
            np.array(d["threshold"], dtype=np.float64),
            np.array(d["left"], dtype=np.int64),
            np.array(d["right"], dtype=np.int64),
            np.array(d["value"], dtype=np.float64),
        )


def _best_split(x: np.ndarray, y: np.ndarray, min_leaf: int) -> tuple[float, float] | None:
    """Best (gini_decrease, threshold) for one feature, or None if no valid split."""
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    n = len(xs)
    n_left = np.arange(1, n)
    pos_left = np.cumsum(ys)[:-1]
    valid = (xs[:-1] < xs[1:]) & (n_left >= min_leaf) & (n - n_left >= min_leaf)
    if not valid.any():
        return None
    n_right = n - n_left
    pos_right = ys.sum() - pos_left
    p_l = pos_left / n_left
    p_r = pos_right / n_right
    weighted = (n_left * 2 * p_l * (1 - p_l) + n_right * 2 * p_r * (1 - p_r)) / n
    p = ys.mean()
    gain = 2 * p * (1 - p) - weighted
    gain[~valid] = -np.inf
    i = int(np.argmax(gain))
    lo, hi = xs[i], xs[i + 1]
    thr = lo + (hi - lo) / 2
    if not lo <= thr < hi:
        thr = lo
    return float(gain[i]), float(thr)


def build_tree(X: np.ndarray, y: np.ndarray, params: ForestParams, rng: np.random.Generator) -> Tree:
    n_features = X.shape[1]
    k = params.features_per_split or math.ceil(math.sqrt(n_features))
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx: np.ndarray) -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y[idx].mean()))
        return len(feature) - 1

    root_idx = np.arange(len(y))
    stack = [(new_node(root_idx), root_idx, 0)]
    while stack:
        node, idx, depth = stack.pop()
        yi = y[idx]
        if (
            yi.min() == yi.max()
            or len(idx) < 2 * params.min_samples_leaf
            or (params.max_depth is not None and depth >= params.max_depth)
        ):
            continue
        best: tuple[float, int, float] | None = None
        visited = 0
        for f in rng.permutation(n_features):
            if visited >= k:
                break
            col = X[idx, f]
            if col.min() == col.max():
                continue  # constant here: never split on it, try another feature
            visited += 1
            found = _best_split(col, yi, params.min_samples_leaf)
            if found is not None and (best is None or found[0] > best[0]):
                best = (found[0], int(f), found[1])
        if best is None:
            continue
        _, f, thr = best
        go_left = X[idx, f] <= thr
        l_idx, r_idx = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(l_idx)
        right[node] = new_node(r_idx)
        stack.append((right[node], r_idx, depth + 1))
        stack.append((left[node], l_idx, depth + 1))
    return Tree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=np.float64),
    )


@dataclass
class ForestModel:
    trees: list[Tree]
    params: ForestParams
    feature_names: tuple[str, ...] = FEATURE_NAMES
    feature_schema_version: str = FEATURE_SCHEMA_VERSION
    train_accuracy: float | None = None
    n_train: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "feature_schema_version": self.feature_schema_version,
            "feature_names": list(self.feature_names),
            "params": asdict(self.params),
            "train_accuracy": self.train_accuracy,
            "n_train": self.n_train,
            "extra": self.extra,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict, expected_schema: str | None = FEATURE_SCHEMA_VERSION) -> "ForestModel":
        if d.get("format_version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported forest format {d.get('format_version')!r}")
        if expected_schema is not None and d["feature_schema_version"] != expected_schema:
            raise ValueError(
                f"forest was trained on feature schema {d['feature_schema_version']!r}, "
                f"this build produces {expected_schema!r}"
            )
        return cls(
            trees=[Tree.from_dict(t) for t in d["trees"]],
            params=ForestParams(**d["params"]),
            feature_names=tuple(d["feature_names"]),
            feature_schema_version=d["feature_schema_version"],
            train_accuracy=d.get("train_accuracy"),
            n_train=d.get("n_train", 0),
            extra=d.get("extra", {}),
        )


def _matrix(examples: Sequence[FeatureVector] | np.ndarray) -> np.ndarray:
    if isinstance(examples, np.ndarray):
        return np.atleast_2d(examples).astype(np.float64)
    return np.vstack([e.values for e in examples])


def train_forest(
    examples: Sequence[FeatureVector] | np.ndarray,
    params: ForestParams | None = None,
    labels: Sequence[int] | None = None,
) -> ForestModel:
    """Fit a seeded forest. Labels come from the examples unless given."""
    params = params or ForestParams()
    X = _matrix(examples)
    if labels is None:
        labels = [e.label for e in examples]
    if any(l is None for l in labels):
        raise ValueError("every training example needs a label")
    y = np.array([1.0 if l else 0.0 for l in labels])
    if len(y) == 0 or y.min() == y.max():
        raise ValueError("training data must contain both positive and negative examples")
    rng = np.random.default_rng(params.seed)
    trees = []
    for _ in range(params.n_trees):
        tree_rng = np.random.default_rng(rng.integers(2**63))
        idx = tree_rng.integers(0, len(y), len(y)) if params.bootstrap else np.arange(len(y))
        trees.append(build_tree(X[idx], y[idx], params, tree_rng))
    names = examples[0].names if not isinstance(examples, np.ndarray) else FEATURE_NAMES[: X.shape[1]]
    model = ForestModel(trees, params, feature_names=tuple(names), n_train=len(y))
    model.train_accuracy = float(np.mean((score_forest(model, X) >= 0.5) == (y == 1.0)))
    return model


def score_forest(model: ForestModel, features: FeatureVector | Sequence[FeatureVector] | np.ndarray) -> np.ndarray | float:
    """Mean leaf positive-fraction over trees; a scalar for a single vector."""
    single = isinstance(features, FeatureVector) or (isinstance(features, np.ndarray) and features.ndim == 1)
    X = _matrix([features] if isinstance(features, FeatureVector) else features)
    if isinstance(features, FeatureVector) and features.names != model.feature_names:
        raise ValueError("feature schema does not match the model")
    if X.shape[1] != model.n_features:
        raise ValueError(f"model expects {model.n_features} features, got {X.shape[1]}")
    scores = np.mean([t.predict(X) for t in model.trees], axis=0)
    return float(scores[0]) if single else scores


def save_forest(model: ForestModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), sort_keys=True), encoding="utf-8")


def load_forest(path: str | Path, expected_schema: str | None = FEATURE_SCHEMA_VERSION) -> ForestModel:
    return ForestModel.from_dict(json.loads(Path(path).read_text(encoding="utf-8")), expected_schema)
