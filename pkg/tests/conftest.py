from __future__ import annotations

from datetime import datetime, timedelta, timezone
from pathlib import Path

import pytest

from issuelink.corpus import CommitRecord, FileChange, IssueRecord

FIXTURES = Path(__file__).parent / "fixtures"
MINI = FIXTURES / "mini"
T0 = datetime(2022, 3, 1, 12, 0, tzinfo=timezone.utc)


def at(days: float) -> datetime:
    return T0 + timedelta(days=days)


def make_issue(key="P-1", created=0.0, closed=None, title="", description="", reporter="rep", assignee=None, project="P"):
    return IssueRecord(project, key, title, description, reporter, at(created), assignee,
                       at(closed) if closed is not None else None, "Closed" if closed is not None else "Open")


def make_commit(h="c1", day=0.0, message="", author="dev", parents=("p0",), files=(("modified", "src/A.java", ()),), project="P"):
    changes = tuple(FileChange(path, kind, tuple(methods)) for kind, path, methods in files)
    return CommitRecord(project, h, author, at(day), message, tuple(parents), changes)


@pytest.fixture
def mini_config(tmp_path):
    """The mini fixture config, with outputs redirected into tmp_path."""
    text = (MINI / "run.yaml").read_text()
    cfg = tmp_path / "run.yaml"
    cfg.write_text(text.replace("issues.jsonl", str(MINI / "issues.jsonl"))
                   .replace("commits.jsonl", str(MINI / "commits.jsonl"))
                   .replace("output_dir: runs", f"output_dir: {tmp_path / 'runs'}"))
    return cfg


def synthetic_config(directory, n_issues=100, n_commits=500, seed=0, retrievers=("bm25", "flat", "rrf"),
                     rerankers=("identity", "forest")):
    """Write a planted-signal project and a run config for it; return (config path, project)."""
    from issuelink.synthetic import generate_project

    directory = Path(directory)
    project = generate_project(n_issues, n_commits, seed=seed)
    issues, commits = project.write(directory / "data")
    lines = [
        "projects:",
        f"  - {{id: SYN, issues: {issues}, commits: {commits}, keys: [SYN]}}",
        f"seed: {seed}",
        f"output_dir: {directory / 'runs'}",
        "retrieval:",
        "  retrievers:",
        *(f"    - name: {r}" for r in retrievers),
        "rerank:",
        "  rerankers:",
        *(f"    - {{name: {r}, type: {r}}}" for r in rerankers),
    ]
    cfg = directory / "run.yaml"
    cfg.write_text("\n".join(lines) + "\n")
    return cfg, project
