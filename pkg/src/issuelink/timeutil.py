"""UTC timestamp helpers shared by ingestion and windowing."""

from __future__ import annotations

from datetime import datetime, timedelta, timezone

DAY = timedelta(days=1)
SECONDS_PER_DAY = 86_400


def parse_timestamp(value: str | int | float | None) -> datetime | None:
    """Parse an ISO-8601 string or epoch seconds into an aware UTC datetime.

    Naive strings are taken to be UTC. Sub-second precision is dropped.
    Returns None for None or empty strings; raises ValueError on garbage.
    """
    if value is None or value == "":
        return None
    if isinstance(value, bool):
        raise ValueError(f"not a timestamp: {value!r}")
    if isinstance(value, (int, float)):
        dt = datetime.fromtimestamp(int(value), tz=timezone.utc)
    else:
        text = value.strip()
        if text.endswith("Z") or text.endswith("z"):
            text = text[:-1] + "+00:00"
        dt = datetime.fromisoformat(text)
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        dt = dt.astimezone(timezone.utc)
    return dt.replace(microsecond=0)


def format_timestamp(dt: datetime | None) -> str | None:
    if dt is None:
        return None
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def days_between(start: datetime, end: datetime) -> float:
    """Signed number of 86,400-second days from ``start`` to ``end``."""
    return (end - start).total_seconds() / SECONDS_PER_DAY
