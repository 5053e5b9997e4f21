"""Run configuration: one YAML document, strictly validated (unknown keys fail)."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .eval import DEFAULT_KS
from .retrieval.pipeline import RETRIEVERS, RetrieverConfig
from .temporal import WindowPolicy


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ProjectConfig(_Strict):
    id: str
    issues: Path
    commits: Path
    key_style: Literal["jira", "github"] = "jira"
    keys: list[str] = Field(default_factory=list)


class IngestConfig(_Strict):
    # keep only commits that mention some issue key, as link-mining datasets do
    keyed_commits_only: bool = True


class WindowConfig(_Strict):
    creation_after_days: int = 365
    creation_before_days: int = 0
    closure_before_days: Optional[int] = 30
    closure_after_days: Optional[int] = 30

    def policy(self) -> WindowPolicy:
        return WindowPolicy(**self.model_dump())


class CoverageConfig(_Strict):
    policies: list[WindowConfig] = Field(
        default_factory=lambda: [
            WindowConfig(closure_before_days=None, closure_after_days=None),
            WindowConfig(closure_before_days=7, closure_after_days=7),
            WindowConfig(),
        ]
    )


class EmbeddingConfig(_Strict):
    provider: Literal["hashing", "http"] = "hashing"
    dim: int = 384
    url: Optional[str] = None


class RetrieverEntry(_Strict):
    name: str
    params: dict[str, Any] = Field(default_factory=dict)
    fuse: list[str] = Field(default_factory=lambda: ["bm25", "flat"])
    rrf_k: int = 60

    @field_validator("name")
    @classmethod
    def _known(cls, v):
        if v not in RETRIEVERS:
            raise ValueError(f"unknown retriever {v!r}; choose from {list(RETRIEVERS)}")
        return v


class RetrievalConfig(_Strict):
    k: int = 50
    idf_scope: Literal["pool", "global"] = "pool"
    embedding: EmbeddingConfig = EmbeddingConfig()
    retrievers: list[RetrieverEntry] = Field(
        default_factory=lambda: [RetrieverEntry(name="bm25"), RetrieverEntry(name="flat"), RetrieverEntry(name="rrf")]
    )

    def retriever_configs(self) -> list[RetrieverConfig]:
        return [
            RetrieverConfig(r.name, self.k, r.params, tuple(r.fuse), r.rrf_k, self.idf_scope)
            for r in self.retrievers
        ]


class SplitConfig(_Strict):
    ratio: float = 0.2


class ForestConfig(_Strict):
    n_trees: int = 100
    max_depth: Optional[int] = None
    min_samples_leaf: int = 1
    features_per_split: Optional[int] = None


class TrainConfig(_Strict):
    candidate_retriever: str = "rrf"
    negatives: int = 10
    forest: ForestConfig = ForestConfig()


class RerankerEntry(_Strict):
    name: str
    type: Literal["forest", "frlink", "identity", "llm", "pairwise"]
    url: Optional[str] = None
    model: Optional[str] = None
    char_budget: int = 1000
    max_concurrency: int = 4
    min_interval: float = 0.0
    retries: int = 3
    backoff: float = 0.5
    timeout: float = 60.0


class RerankConfig(_Strict):
    k: int = 20
    candidate_retriever: str = "rrf"
    rerankers: list[RerankerEntry] = Field(
        default_factory=lambda: [
            RerankerEntry(name="forest", type="forest"),
            RerankerEntry(name="frlink", type="frlink"),
        ]
    )

    @model_validator(mode="after")
    def _unique(self):
        names = [r.name for r in self.rerankers]
        if len(set(names)) != len(names):
            raise ValueError("reranker names must be unique")
        return self


class EvaluateConfig(_Strict):
    ks: list[int] = Field(default_factory=lambda: list(DEFAULT_KS))
    sample_size: int = 1000
    repeats: int = 5


class RunConfig(_Strict):
    projects: list[ProjectConfig]
    seed: int = 0
    output_dir: Path = Path("runs")
    workers: Optional[int] = None
    ingest: IngestConfig = IngestConfig()
    window: WindowConfig = WindowConfig()
    coverage: CoverageConfig = CoverageConfig()
    retrieval: RetrievalConfig = RetrievalConfig()
    split: SplitConfig = SplitConfig()
    train: TrainConfig = TrainConfig()
    rerank: RerankConfig = RerankConfig()
    evaluate: EvaluateConfig = EvaluateConfig()

    @model_validator(mode="after")
    def _cross_checks(self):
        if not self.projects:
            raise ValueError("at least one project is required")
        ids = [p.id for p in self.projects]
        if len(set(ids)) != len(ids):
            raise ValueError("project ids must be unique")
        names = {r.name for r in self.retrieval.retrievers}
        for stage, name in (("train", self.train.candidate_retriever), ("rerank", self.rerank.candidate_retriever)):
            if name not in names:
                raise ValueError(f"{stage}.candidate_retriever {name!r} is not among retrieval.retrievers")
        self.window.policy()
        return self

    def check_files(self) -> None:
        missing = [str(p) for proj in self.projects for p in (proj.issues, proj.commits) if not p.is_file()]
        if missing:
            raise ConfigError(f"input files not found: {', '.join(missing)}")


def load_config(path: str | Path, overrides: dict[str, Any] | None = None) -> RunConfig:
    """Parse and validate a YAML config; relative paths resolve against its directory."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    base = path.parent
    for proj in raw.get("projects") or []:
        if isinstance(proj, dict):
            for key in ("issues", "commits"):
                if key in proj and not Path(proj[key]).is_absolute():
                    proj[key] = str(base / proj[key])
    if "output_dir" in raw and not Path(raw["output_dir"]).is_absolute() and "output_dir" not in (overrides or {}):
        raw["output_dir"] = str(base / raw["output_dir"])
    try:
        cfg = RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    cfg.check_files()
    return cfg


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def fingerprint(obj: Any) -> str:
    blob = json.dumps(obj, sort_keys=True, default=str, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def stage_hashes(cfg: RunConfig) -> dict[str, str]:
    """Content hash per stage, chained through the stages it depends on.

    Input files enter by content digest, so moving them does not invalidate
    artifacts while editing them does. Output location and worker count never
    affect a hash.
    """
    projects = [
        {"id": p.id, "key_style": p.key_style, "keys": p.keys,
         "issues": _file_digest(p.issues), "commits": _file_digest(p.commits)}
        for p in cfg.projects
    ]
    h: dict[str, str] = {}
    h["ingest"] = fingerprint({"projects": projects, "ingest": cfg.ingest.model_dump()})
    h["coverage"] = fingerprint({"up": h["ingest"], "coverage": cfg.coverage.model_dump()})
    h["retrieve"] = fingerprint(
        {"up": h["ingest"], "window": cfg.window.model_dump(), "retrieval": cfg.retrieval.model_dump(), "seed": cfg.seed}
    )
    h["train"] = fingerprint(
        {"up": h["retrieve"], "split": cfg.split.model_dump(), "train": cfg.train.model_dump(), "seed": cfg.seed}
    )
    h["rerank"] = fingerprint({"up": h["train"], "rerank": cfg.rerank.model_dump()})
    h["evaluate"] = fingerprint({"up": h["rerank"], "evaluate": cfg.evaluate.model_dump(), "seed": cfg.seed})
    return h
