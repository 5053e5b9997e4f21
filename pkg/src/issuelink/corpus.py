"""Ingestion of exported issues and commits, true-link mining and document building.

Both input files are UTF-8, one JSON object per line. Issues carry the
``IssueRecord`` fields, commits the ``CommitRecord`` fields with
``file_changes`` nested as arrays. See ``docs/export.md`` for a recipe that
produces the commits file from ``git log``.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Iterable, Sequence

from .text import tokenize
from .timeutil import format_timestamp, parse_timestamp

logger = logging.getLogger(__name__)

CHANGE_TYPES = ("added", "removed", "modified")
KEY_STYLES = ("jira", "github")


class IngestError(Exception):
    """A fatal ingestion problem (unreadable or unusable input file)."""


@dataclass(frozen=True)
class IssueRecord:
    project_id: str
    issue_key: str
    title: str
    description: str
    reporter: str
    created_at: datetime
    assignee: str | None = None
    closed_at: datetime | None = None
    status: str = ""

    @property
    def usable_closed_at(self) -> datetime | None:
        """closed_at, or None when it precedes creation (data-quality noise)."""
        if self.closed_at is None or self.closed_at < self.created_at:
            return None
        return self.closed_at

    def to_dict(self) -> dict:
        return {
            "project_id": self.project_id,
            "issue_key": self.issue_key,
            "title": self.title,
            "description": self.description,
            "reporter": self.reporter,
            "assignee": self.assignee,
            "created_at": format_timestamp(self.created_at),
            "closed_at": format_timestamp(self.closed_at),
            "status": self.status,
        }


@dataclass(frozen=True)
class FileChange:
    path: str
    change_type: str
    methods: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.path:
            raise ValueError("file change path must be non-empty")
        if self.change_type not in CHANGE_TYPES:
            raise ValueError(f"unknown change_type {self.change_type!r}")

    def to_dict(self) -> dict:
        return {"path": self.path, "change_type": self.change_type, "methods": list(self.methods)}


@dataclass(frozen=True)
class CommitRecord:
    project_id: str
    hash: str
    author: str
    committed_at: datetime
    message: str
    parents: tuple[str, ...] = ()
    file_changes: tuple[FileChange, ...] = ()

    def to_dict(self) -> dict:
        return {
            "project_id": self.project_id,
            "hash": self.hash,
            "author": self.author,
            "committed_at": format_timestamp(self.committed_at),
            "message": self.message,
            "parents": list(self.parents),
            "file_changes": [fc.to_dict() for fc in self.file_changes],
        }


@dataclass(frozen=True)
class TrueLink:
    project_id: str
    issue_key: str
    commit_hash: str
    source: str = "explicit_key"

    def to_dict(self) -> dict:
        return {
            "project_id": self.project_id,
            "issue_key": self.issue_key,
            "commit_hash": self.commit_hash,
            "source": self.source,
        }


@dataclass(frozen=True)
class Document:
    """A scrubbed retrieval document for one commit.

    ``message`` and ``code_terms`` are the two halves of ``text``; the
    rerank features score them separately.
    """

    doc_id: str
    text: str
    token_count: int
    message: str = ""
    code_terms: str = ""

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "text": self.text,
            "token_count": self.token_count,
            "message": self.message,
            "code_terms": self.code_terms,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Document":
        return cls(d["doc_id"], d["text"], int(d["token_count"]), d.get("message", ""), d.get("code_terms", ""))


@dataclass
class IngestResult:
    """Records accepted from one file plus what was rejected and why."""

    records: list
    skipped: int = 0
    duplicates: int = 0
    warnings: list[str] = field(default_factory=list)
    closed_before_created: int = 0
    malformed_closed_at: int = 0

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


# ---------------------------------------------------------------- ingestion


def _read_lines(path: str | Path) -> list[str]:
    try:
        return Path(path).read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc


def _str(obj: dict, name: str, default: str | None = "") -> str | None:
    value = obj.get(name, default)
    if value is None:
        return default
    if not isinstance(value, str):
        raise ValueError(f"field {name!r} must be a string")
    return value


def _warn(result: IngestResult, path, lineno: int, msg: str) -> None:
    text = f"{path}:{lineno}: {msg}"
    result.warnings.append(text)
    logger.warning(text)


def ingest_issues(path: str | Path, project_id: str | None = None) -> IngestResult:
    """Read a line-delimited issues file.

    ``project_id`` fills records that do not name their project. Malformed
    lines, records without ``issue_key``/``created_at`` and repeated keys
    within a project are skipped with a warning naming the line.
    """
    result = IngestResult(records=[])
    seen: set[tuple[str, str]] = set()
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            if not isinstance(obj, dict):
                raise ValueError("line is not an object")
            key = _str(obj, "issue_key")
            created = parse_timestamp(obj.get("created_at"))
            if not key or created is None:
                raise ValueError("missing issue_key or created_at")
            pid = _str(obj, "project_id") or project_id or ""
            closed_raw = obj.get("closed_at")
            try:
                closed = parse_timestamp(closed_raw)
            except (TypeError, ValueError):
                closed = None
                result.malformed_closed_at += 1
                _warn(result, path, lineno, f"unparseable closed_at {closed_raw!r} ignored")
            issue = IssueRecord(
                project_id=pid,
                issue_key=key,
                title=_str(obj, "title"),
                description=_str(obj, "description"),
                reporter=_str(obj, "reporter"),
                assignee=_str(obj, "assignee", None) or None,
                created_at=created,
                closed_at=closed,
                status=_str(obj, "status"),
            )
        except (ValueError, TypeError) as exc:
            result.skipped += 1
            _warn(result, path, lineno, f"skipped issue: {exc}")
            continue
        if (issue.project_id, issue.issue_key) in seen:
            result.skipped += 1
            result.duplicates += 1
            _warn(result, path, lineno, f"duplicate issue_key {issue.issue_key!r} rejected")
            continue
        seen.add((issue.project_id, issue.issue_key))
        if issue.closed_at is not None and issue.closed_at < issue.created_at:
            result.closed_before_created += 1
        result.records.append(issue)
    return result


def _file_change(obj) -> FileChange:
    if not isinstance(obj, dict):
        raise ValueError("file change is not an object")
    methods = obj.get("methods") or []
    if not isinstance(methods, list) or not all(isinstance(m, str) for m in methods):
        raise ValueError("methods must be a list of strings")
    # "diff" is accepted for completeness but nothing consumes it
    return FileChange(path=_str(obj, "path"), change_type=_str(obj, "change_type"), methods=tuple(methods))


def ingest_commits(path: str | Path, project_id: str | None = None) -> IngestResult:
    """Read a line-delimited commits file; ``hash`` and ``committed_at`` are required."""
    result = IngestResult(records=[])
    seen: set[tuple[str, str]] = set()
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            if not isinstance(obj, dict):
                raise ValueError("line is not an object")
            h = _str(obj, "hash")
            committed = parse_timestamp(obj.get("committed_at"))
            if not h or committed is None:
                raise ValueError("missing hash or committed_at")
            parents = obj.get("parents") or []
            changes = obj.get("file_changes") or []
            if not isinstance(parents, list) or not all(isinstance(p, str) for p in parents):
                raise ValueError("parents must be a list of strings")
            if not isinstance(changes, list):
                raise ValueError("file_changes must be a list")
            commit = CommitRecord(
                project_id=_str(obj, "project_id") or project_id or "",
                hash=h,
                author=_str(obj, "author"),
                committed_at=committed,
                message=_str(obj, "message"),
                parents=tuple(parents),
                file_changes=tuple(_file_change(c) for c in changes),
            )
        except (ValueError, TypeError) as exc:
            result.skipped += 1
            _warn(result, path, lineno, f"skipped commit: {exc}")
            continue
        if (commit.project_id, commit.hash) in seen:
            result.skipped += 1
            result.duplicates += 1
            _warn(result, path, lineno, f"duplicate hash {commit.hash!r} rejected")
            continue
        seen.add((commit.project_id, commit.hash))
        result.records.append(commit)
    return result


def write_records(records: Iterable, path: str | Path) -> None:
    """Write records (anything with ``to_dict``) in the canonical line format."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True, ensure_ascii=False))
            fh.write("\n")


# ------------------------------------------------------------ filtering


def filter_commits(commits: Iterable[CommitRecord]) -> list[CommitRecord]:
    """Drop merge commits and commits that touch no files, preserving order."""
    return [c for c in commits if len(c.parents) <= 1 and len(c.file_changes) >= 1]


# ------------------------------------------------------------ issue keys


def key_pattern(project_keys: Sequence[str], style: str = "jira") -> re.Pattern:
    """Compiled issue-key regex for a project.

    Jira keys are anchored so "MYKAFKA-1" does not match key "KAFKA".
    """
    if style == "github":
        return re.compile(r"(?<![\w#])#\d+(?!\d)")
    if style != "jira":
        raise ValueError(f"unknown key style {style!r}")
    if not project_keys:
        raise ValueError("jira-style projects need at least one project key")
    alternation = "|".join(sorted((re.escape(k) for k in project_keys), key=len, reverse=True))
    return re.compile(rf"(?<![A-Za-z0-9_])(?:{alternation})-\d+(?!\d)", re.IGNORECASE)


def infer_project_keys(issue_keys: Iterable[str]) -> list[str]:
    """Distinct KEY prefixes of Jira-style issue keys such as ``SPARK-123``."""
    keys = set()
    for k in issue_keys:
        head, sep, tail = k.rpartition("-")
        if sep and head and tail.isdigit():
            keys.add(head)
    return sorted(keys)


def _normalize_key(match: str, project_keys: Sequence[str]) -> str:
    head, _, num = match.rpartition("-")
    for k in project_keys:
        if k.lower() == head.lower():
            return f"{k}-{num}"
    return match


def find_issue_keys(text: str, project_keys: Sequence[str], style: str = "jira") -> list[str]:
    """Issue keys mentioned in ``text``, in order of first appearance, deduplicated."""
    found: list[str] = []
    for m in key_pattern(project_keys, style).finditer(text):
        key = m.group(0) if style == "github" else _normalize_key(m.group(0), project_keys)
        if key not in found:
            found.append(key)
    return found


def extract_true_links(
    commits: Iterable[CommitRecord], project_keys: Sequence[str], style: str = "jira"
) -> list[TrueLink]:
    """One link per distinct (issue key, commit) pair mentioned in raw messages.

    Every key in a message becomes a link. Links are not checked against the
    issue set here; see ``resolve_links``.
    """
    links: list[TrueLink] = []
    seen: set[tuple[str, str]] = set()
    for c in commits:
        for key in find_issue_keys(c.message, project_keys, style):
            if (key, c.hash) in seen:
                continue
            seen.add((key, c.hash))
            links.append(TrueLink(c.project_id, key, c.hash))
    return links


def resolve_links(
    links: Iterable[TrueLink], issues: Iterable[IssueRecord], commits: Iterable[CommitRecord]
) -> tuple[list[TrueLink], list[TrueLink]]:
    """Split links into (resolvable, unresolvable) against the ingested records."""
    issue_ids = {(i.project_id, i.issue_key) for i in issues}
    commit_ids = {(c.project_id, c.hash) for c in commits}
    good, bad = [], []
    for link in links:
        ok = (link.project_id, link.issue_key) in issue_ids and (link.project_id, link.commit_hash) in commit_ids
        (good if ok else bad).append(link)
    return good, bad


def scrub_identifiers(text: str, project_keys: Sequence[str], style: str = "jira") -> str:
    """Delete every issue-key mention; the rest of the text is left untouched."""
    if style == "jira" and not project_keys:
        return text
    return key_pattern(project_keys, style).sub("", text)


# ------------------------------------------------------------ documents


def code_terms(commit: CommitRecord) -> str:
    """One ``<change_type> <path> <methods...>`` line per changed file."""
    return "\n".join(" ".join((fc.change_type, fc.path, *fc.methods)) for fc in commit.file_changes)


def commit_document(commit: CommitRecord, project_keys: Sequence[str], style: str = "jira") -> Document:
    message = scrub_identifiers(commit.message, project_keys, style)
    terms = code_terms(commit)
    text = f"{message}\n{terms}" if terms else message
    return Document(
        doc_id=commit.hash,
        text=text,
        token_count=len(tokenize(text)),
        message=message,
        code_terms=terms,
    )


def issue_query(issue: IssueRecord, project_keys: Sequence[str] | None = None, style: str = "jira") -> str:
    """Title and description joined by a space, with issue keys removed.

    Jira keys default to the prefix of the issue's own key.
    """
    if project_keys is None:
        project_keys = infer_project_keys([issue.issue_key]) if style == "jira" else []
    return scrub_identifiers(f"{issue.title} {issue.description}", project_keys, style)
