"""Bucketed temporal aggregation and two-window comparison.

Pure computations over event snapshots: callers fetch the matching events
(e.g. ``store.events_matching``) and pass them in, so everything here is
safe to evaluate concurrently and trivial to oracle-test.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

from .model import SecurityEvent

# Widths an auto-chosen timeline may use, finest first.
INTERVAL_LADDER_MS = (
    1_000,  # 1s
    10_000,  # 10s
    60_000,  # 1m
    300_000,  # 5m
    3_600_000,  # 1h
    21_600_000,  # 6h
    86_400_000,  # 1d
    604_800_000,  # 7d
)

MAX_AUTO_BUCKETS = 200
MAX_BUCKETS = 10**6


class TimelineError(ValueError):
    pass


@dataclass
class TimelineBucket:
    bucket_start: int
    counts: dict[str, int] = field(default_factory=dict)

    def total(self) -> int:
        return sum(self.counts.values())


@dataclass
class TimelineSeries:
    bucket_width_ms: int
    start: int
    buckets: list[TimelineBucket]
    total: int


@dataclass
class CategoryDelta:
    count_current: int
    count_past: int
    ratio: Optional[float]  # None means "new": activity with an empty past
    new: bool


@dataclass
class WindowComparison:
    current: TimelineSeries
    past: TimelineSeries
    deltas: dict[str, CategoryDelta]
    alignment_offset_ms: int


def floor_align(ts: int, width: int) -> int:
    return (ts // width) * width


def bucket_count(time_from: int, time_to: int, width: int) -> int:
    """Number of epoch-aligned buckets intersecting the half-open range."""
    if time_from >= time_to:
        return 0
    return (floor_align(time_to - 1, width) - floor_align(time_from, width)) // width + 1


def auto_interval(time_from: int, time_to: int) -> int:
    """Smallest ladder width that keeps the range at or under 200 buckets."""
    if time_from >= time_to:
        raise TimelineError("empty time range")
    for width in INTERVAL_LADDER_MS:
        if bucket_count(time_from, time_to, width) <= MAX_AUTO_BUCKETS:
            return width
    return INTERVAL_LADDER_MS[-1]


def bucketize(
    events: Iterable[SecurityEvent],
    time_from: int,
    time_to: int,
    width: int,
    align_start: Optional[int] = None,
) -> TimelineSeries:
    """Per-category counts in contiguous half-open buckets.

    Bucket boundaries are epoch multiples of ``width`` (floor alignment), so
    series for overlapping ranges share boundaries. ``align_start`` overrides
    the grid origin for window comparison (see compare_windows).
    """
    if width <= 0:
        raise TimelineError("width must be positive")
    if time_from >= time_to:
        raise TimelineError("empty time range")
    origin = align_start if align_start is not None else 0
    start = origin + floor_align(time_from - origin, width)
    n = (origin + floor_align(time_to - 1 - origin, width) - start) // width + 1
    if n > MAX_BUCKETS:
        raise TimelineError("range too fine")
    buckets = [TimelineBucket(bucket_start=start + i * width) for i in range(n)]
    total = 0
    for ev in events:
        if not time_from <= ev.ts < time_to:
            continue
        i = (ev.ts - start) // width
        counts = buckets[i].counts
        counts[ev.category] = counts.get(ev.category, 0) + 1
        total += 1
    return TimelineSeries(bucket_width_ms=width, start=start, buckets=buckets, total=total)


def compare_windows(
    current_events: Iterable[SecurityEvent],
    past_events: Iterable[SecurityEvent],
    current_from: int,
    current_to: int,
    past_from: int,
    width: int,
) -> WindowComparison:
    """Align a past window of equal length bucket-for-bucket under the current one.

    The current series sits on the epoch-aligned grid; the past series uses
    the same grid shifted by exactly the window offset, so bucket i of past
    lines up with bucket i of current in relative time.
    """
    length = current_to - current_from
    if length <= 0:
        raise TimelineError("empty current window")
    offset = current_from - past_from
    past_to = past_from + length
    if past_to > current_from:
        raise TimelineError("past window must be entirely older than the current one")
    current = bucketize(current_events, current_from, current_to, width)
    past = bucketize(past_events, past_from, past_to, width, align_start=current.start - offset)
    if len(past.buckets) != len(current.buckets):
        raise TimelineError("window bucket counts diverged")  # unreachable by construction
    cur_totals: dict[str, int] = {}
    past_totals: dict[str, int] = {}
    for b in current.buckets:
        for cat, n in b.counts.items():
            cur_totals[cat] = cur_totals.get(cat, 0) + n
    for b in past.buckets:
        for cat, n in b.counts.items():
            past_totals[cat] = past_totals.get(cat, 0) + n
    deltas: dict[str, CategoryDelta] = {}
    for cat in sorted(set(cur_totals) | set(past_totals)):
        c = cur_totals.get(cat, 0)
        p = past_totals.get(cat, 0)
        if p == 0:
            deltas[cat] = CategoryDelta(count_current=c, count_past=0, ratio=None, new=c > 0)
        else:
            deltas[cat] = CategoryDelta(count_current=c, count_past=p, ratio=c / p, new=False)
    return WindowComparison(current=current, past=past, deltas=deltas, alignment_offset_ms=offset)


def merge_adjacent(series: TimelineSeries) -> TimelineSeries:
    """Pairwise-merge buckets into a width-2w series (refinement check helper)."""
    if len(series.buckets) % 2 != 0:
        raise TimelineError("odd bucket count cannot merge pairwise")
    width = series.bucket_width_ms * 2
    merged: list[TimelineBucket] = []
    for i in range(0, len(series.buckets), 2):
        a, b = series.buckets[i], series.buckets[i + 1]
        counts = dict(a.counts)
        for cat, n in b.counts.items():
            counts[cat] = counts.get(cat, 0) + n
        merged.append(TimelineBucket(bucket_start=a.bucket_start, counts=counts))
    return TimelineSeries(bucket_width_ms=width, start=series.start, buckets=merged, total=series.total)
