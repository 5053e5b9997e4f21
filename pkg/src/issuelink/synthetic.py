"""Seeded synthetic projects with planted link signal, for tests and demos.

True commits reuse words from their issue title, are authored by the issue's
reporter and land within two days of closure. Each issue also gets lexical
distractors that share more title words than the true commit but come from
other developers at unrelated times, so lexical retrieval alone is misled
while the metadata still identifies the link.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .corpus import CommitRecord, FileChange, IssueRecord, write_records

EPOCH = datetime(2020, 1, 1, tzinfo=timezone.utc)
_SYLLABLES = ["ka", "lo", "mi", "ne", "ru", "sa", "to", "vi", "ze", "po", "qu", "fe", "di", "gu", "ba", "ho"]
GENERIC_WORDS = ["update", "refactor", "cleanup", "handle", "improve", "adjust", "support", "logging", "config", "tests"]


def _words(rng: np.random.Generator, n: int) -> list[str]:
    seen: set[str] = set()
    out = []
    while len(out) < n:
        w = "".join(rng.choice(_SYLLABLES, size=3))
        if w not in seen:
            seen.add(w)
            out.append(w)
    return out


@dataclass
class SyntheticProject:
    issues: list[IssueRecord]
    commits: list[CommitRecord]
    truth: dict[str, set[str]]  # issue_key -> true commit hashes

    def write(self, directory: str | Path) -> tuple[Path, Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        write_records(self.issues, d / "issues.jsonl")
        write_records(self.commits, d / "commits.jsonl")
        return d / "issues.jsonl", d / "commits.jsonl"


def generate_project(
    n_issues: int = 100,
    n_commits: int = 500,
    seed: int = 0,
    key: str = "SYN",
    distractors_per_issue: int = 2,
    n_components: int = 10,
    span_days: int = 1000,
) -> SyntheticProject:
    rng = np.random.default_rng(seed)
    devs = [f"dev{i:02d}" for i in range(30)]
    vocab = _words(rng, n_components * 15)
    components = [vocab[i * 15 : (i + 1) * 15] for i in range(n_components)]
    counter = iter(range(10**9))

    def new_hash() -> str:
        return f"{rng.integers(2**62):016x}{next(counter):08x}"

    def files(comp: int, n: int) -> tuple[FileChange, ...]:
        out = []
        for _ in range(n):
            w = rng.choice(components[comp])
            out.append(FileChange(f"src/c{comp}/{w.capitalize()}.java", str(rng.choice(["modified", "added", "modified"])),
                                  (f"{w}{rng.choice(['Init', 'Run', 'Close'])}",)))
        return tuple(out)

    def at(days: float) -> datetime:
        return EPOCH + timedelta(seconds=int(days * 86400))

    issues: list[IssueRecord] = []
    commits: list[CommitRecord] = []
    truth: dict[str, set[str]] = {}
    foreign = iter(range(90000, 10**9))
    for i in range(n_issues):
        comp = int(rng.integers(n_components))
        created_d = float(rng.uniform(0, span_days - 100))
        closed_d = created_d + float(rng.uniform(2, 60))
        title_words = list(rng.choice(components[comp], size=4, replace=False))
        desc_words = list(rng.choice(components[comp], size=6)) + list(rng.choice(GENERIC_WORDS, size=3))
        reporter = str(rng.choice(devs))
        issue_key = f"{key}-{i + 1}"
        issues.append(
            IssueRecord(
                project_id=key, issue_key=issue_key, title=" ".join(title_words).capitalize(),
                description=" ".join(desc_words), reporter=reporter,
                assignee=reporter if rng.random() < 0.7 else str(rng.choice(devs)),
                created_at=at(created_d), closed_at=at(closed_d), status="Closed",
            )
        )
        truth[issue_key] = set()
        for _ in range(1 + int(rng.random() < 0.5)):
            words = list(rng.choice(title_words, size=2, replace=False)) + list(rng.choice(GENERIC_WORDS, size=2))
            h = new_hash()
            commits.append(
                CommitRecord(key, h, reporter, at(closed_d - float(rng.uniform(0, 2))),
                             f"{issue_key}: {' '.join(words)}", (new_hash(),), files(comp, int(rng.integers(1, 4))))
            )
            truth[issue_key].add(h)
        for _ in range(distractors_per_issue):
            words = list(rng.choice(title_words, size=3, replace=False)) + [str(rng.choice(GENERIC_WORDS))]
            author = str(rng.choice([d for d in devs if d != reporter]))
            t = created_d + float(rng.uniform(0, 300))
            if abs(t - closed_d) < 20:
                t = closed_d + 20 + float(rng.uniform(0, 100))
            commits.append(
                CommitRecord(key, new_hash(), author, at(t), f"{key}-{next(foreign)}: {' '.join(words)}",
                             (new_hash(),), files(comp, int(rng.integers(1, 4))))
            )
    while len(commits) < n_commits:
        comp = int(rng.integers(n_components))
        words = list(rng.choice(components[comp], size=3)) + [str(rng.choice(GENERIC_WORDS))]
        commits.append(
            CommitRecord(key, new_hash(), str(rng.choice(devs)), at(float(rng.uniform(0, span_days))),
                         f"{key}-{next(foreign)}: {' '.join(words)}", (new_hash(),),
                         files(comp, int(rng.integers(1, 4))))
        )
    commits.sort(key=lambda c: (c.committed_at, c.hash))
    return SyntheticProject(issues, commits, truth)


def clustered_vectors(
    n: int, dim: int = 384, n_clusters: int = 10, latent_dim: int = 8, spread: float = 1.0, seed: int = 0
) -> np.ndarray:
    """Unit vectors from ``n_clusters`` Gaussian clusters in a ``latent_dim``
    subspace, linearly embedded into ``dim`` dimensions.

    The low intrinsic dimension mimics sentence-embedding manifolds; isotropic
    clusters in the full space make all same-cluster points near-equidistant.
    """
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((n_clusters, latent_dim))
    proj = rng.standard_normal((latent_dim, dim))
    labels = rng.integers(0, n_clusters, n)
    x = (centers[labels] + spread * rng.standard_normal((n, latent_dim))) @ proj
    return x / np.linalg.norm(x, axis=1, keepdims=True)
