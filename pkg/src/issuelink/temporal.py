"""Temporal candidate windows around issue creation and closure.

Intervals are closed on both ends and days are exact 86,400-second spans.
"""

from __future__ import annotations

import bisect
import logging
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta
from typing import Iterable, Sequence

from .corpus import CommitRecord, IssueRecord, TrueLink

logger = logging.getLogger(__name__)

Interval = tuple[datetime, datetime]


@dataclass(frozen=True)
class WindowPolicy:
    creation_after_days: int = 365
    creation_before_days: int = 0
    closure_before_days: int | None = 30
    closure_after_days: int | None = 30

    def __post_init__(self):
        for name in ("creation_after_days", "creation_before_days", "closure_before_days", "closure_after_days"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ValueError(f"{name} must be >= 0, got {value}")
        if not (self.creation_enabled or self.closure_enabled):
            raise ValueError("window policy enables neither a creation window nor closure buffers")

    @property
    def creation_enabled(self) -> bool:
        return self.creation_after_days > 0 or self.creation_before_days > 0

    @property
    def closure_enabled(self) -> bool:
        return self.closure_before_days is not None or self.closure_after_days is not None

    @property
    def label(self) -> str:
        s = f"create[-{self.creation_before_days}d,+{self.creation_after_days}d]"
        if self.closure_enabled:
            s += f" close[-{self.closure_before_days or 0}d,+{self.closure_after_days or 0}d]"
        return s

    def to_dict(self) -> dict:
        return asdict(self)


DEFAULT_POLICY = WindowPolicy()
CREATION_ONLY = WindowPolicy(365, 0, None, None)


def _merge(intervals: list[Interval]) -> list[Interval]:
    merged: list[Interval] = []
    for lo, hi in sorted(intervals):
        if merged and lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return merged


def window_bounds(issue: IssueRecord, policy: WindowPolicy) -> list[Interval]:
    """Sorted, merged candidate intervals for ``issue`` under ``policy``.

    The closure interval needs a usable ``closed_at``; a closure-only policy
    therefore yields no interval for an open issue. No interval reaches back
    past ``created_at - creation_before_days``: a buffer around an early
    closure never admits commits from before the issue existed.
    """
    created = issue.created_at
    floor = created - timedelta(days=policy.creation_before_days)
    intervals: list[Interval] = []
    if policy.creation_enabled:
        intervals.append(
            (
                created - timedelta(days=policy.creation_before_days),
                created + timedelta(days=policy.creation_after_days),
            )
        )
    closed = issue.usable_closed_at
    if closed is not None and policy.closure_enabled:
        intervals.append(
            (
                max(floor, closed - timedelta(days=policy.closure_before_days or 0)),
                closed + timedelta(days=policy.closure_after_days or 0),
            )
        )
    return _merge(intervals)


def in_window(ts: datetime, intervals: Sequence[Interval]) -> bool:
    return any(lo <= ts <= hi for lo, hi in intervals)


def candidate_pool(
    issue: IssueRecord, commits: Iterable[CommitRecord], policy: WindowPolicy
) -> list[CommitRecord]:
    """Commits inside the issue's window, sorted by commit time (then hash)."""
    intervals = window_bounds(issue, policy)
    pool = [c for c in commits if in_window(c.committed_at, intervals)]
    pool.sort(key=lambda c: (c.committed_at, c.hash))
    return pool


class CommitTimeline:
    """Commits pre-sorted by time so many pools can be cut by bisection."""

    def __init__(self, commits: Iterable[CommitRecord]):
        self.commits = sorted(commits, key=lambda c: (c.committed_at, c.hash))
        self._times = [c.committed_at for c in self.commits]

    def pool(self, issue: IssueRecord, policy: WindowPolicy) -> list[CommitRecord]:
        out: list[CommitRecord] = []
        for lo, hi in window_bounds(issue, policy):
            i = bisect.bisect_left(self._times, lo)
            j = bisect.bisect_right(self._times, hi)
            out.extend(self.commits[i:j])
        return out


@dataclass
class CoverageReport:
    policy: WindowPolicy
    total_links: int
    captured_links: int
    coverage: float
    per_project: dict[str, float] = field(default_factory=dict)
    unresolved_links: int = 0

    def to_dict(self) -> dict:
        return {
            "policy": self.policy.to_dict(),
            "label": self.policy.label,
            "total_links": self.total_links,
            "captured_links": self.captured_links,
            "coverage": self.coverage,
            "per_project": dict(sorted(self.per_project.items())),
            "unresolved_links": self.unresolved_links,
        }


def coverage(
    links: Iterable[TrueLink],
    issues: Iterable[IssueRecord],
    commits: Iterable[CommitRecord],
    policy: WindowPolicy,
) -> CoverageReport:
    """Fraction of true links whose commit falls inside the issue's window."""
    issue_map = {(i.project_id, i.issue_key): i for i in issues}
    commit_map = {(c.project_id, c.hash): c for c in commits}
    totals: dict[str, int] = {}
    hits: dict[str, int] = {}
    unresolved = 0
    for link in links:
        issue = issue_map.get((link.project_id, link.issue_key))
        commit = commit_map.get((link.project_id, link.commit_hash))
        if issue is None or commit is None:
            unresolved += 1
            logger.warning("unresolvable link %s -> %s excluded from coverage", link.issue_key, link.commit_hash)
            continue
        totals[link.project_id] = totals.get(link.project_id, 0) + 1
        if in_window(commit.committed_at, window_bounds(issue, policy)):
            hits[link.project_id] = hits.get(link.project_id, 0) + 1
    total = sum(totals.values())
    captured = sum(hits.values())
    return CoverageReport(
        policy=policy,
        total_links=total,
        captured_links=captured,
        coverage=captured / total if total else 0.0,
        per_project={p: hits.get(p, 0) / n for p, n in totals.items()},
        unresolved_links=unresolved,
    )


def policy_sweep(
    creation_after: Sequence[int],
    closure_buffers: Sequence[int | None] = (None,),
    creation_before: int = 0,
) -> list[WindowPolicy]:
    """Cartesian sweep over creation spans and symmetric closure buffers."""
    return [
        WindowPolicy(after, creation_before, buf, buf)
        for after in creation_after
        for buf in closure_buffers
    ]


def format_coverage_table(reports: Sequence[CoverageReport]) -> str:
    rows = [("policy", "links", "captured", "coverage")]
    for r in reports:
        rows.append((r.policy.label, str(r.total_links), str(r.captured_links), f"{r.coverage:.4f}"))
    widths = [max(len(row[i]) for row in rows) for i in range(4)]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)
