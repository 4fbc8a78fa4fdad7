from __future__ import annotations

import random

import pytest

from huntdeck.model import EventFilter
from huntdeck.timeline import (
    TimelineError,
    auto_interval,
    bucket_count,
    bucketize,
    compare_windows,
    floor_align,
    merge_adjacent,
)
from util import mk_event, random_events, random_filter


def test_auto_interval_ladder():
    assert auto_interval(0, 100_000) == 1_000  # 100 buckets of 1s
    assert auto_interval(0, 10_000_000) == 60_000  # 10000s -> 1m
    assert auto_interval(0, 3_600_000) == 60_000  # 1h -> 1m, 60 buckets
    assert bucket_count(0, 3_600_000, 60_000) == 60
    # misaligned range may cover one extra bucket but stays on the same rung
    assert auto_interval(500, 100_500) == 1_000


def test_auto_interval_huge_range_caps_at_ladder_top():
    assert auto_interval(0, 10 * 365 * 86_400_000) == 604_800_000


def test_bucketize_empty():
    series = bucketize([], 0, 10_000, 1_000)
    assert series.total == 0
    assert len(series.buckets) == 10
    assert all(b.counts == {} for b in series.buckets)


def test_bucketize_half_open_boundary():
    events = [mk_event(t) for t in (1, 999, 1000)]
    series = bucketize(events, 1, 2000, 1000)
    assert series.start == 0
    assert [b.total() for b in series.buckets] == [2, 1]
    assert series.total == 3


def test_bucketize_alignment_is_epoch_based():
    events = [mk_event(t) for t in (1500, 2500)]
    series = bucketize(events, 1400, 2600, 1000)
    assert series.start == 1000
    assert [b.bucket_start for b in series.buckets] == [1000, 2000]


def test_bucketize_rejects_too_fine():
    with pytest.raises(TimelineError, match="range too fine"):
        bucketize([], 0, 10**10, 1)


def test_bucketize_matches_oracle_scan():
    rng = random.Random(5)
    events = random_events(rng, 2000)
    for _ in range(40):
        flt = random_filter(rng)
        width = rng.choice([1_000, 10_000, 60_000, 300_000])
        matching = [e for e in events if flt.matches(e)]
        series = bucketize(matching, flt.time_from, flt.time_to, width)
        # oracle: independent floor-alignment histogram
        oracle: dict[tuple[int, str], int] = {}
        for ev in matching:
            key = (floor_align(ev.ts, width), ev.category)
            oracle[key] = oracle.get(key, 0) + 1
        got = {
            (b.bucket_start, cat): n
            for b in series.buckets
            for cat, n in b.counts.items()
        }
        assert got == oracle
        assert series.total == len(matching)


def test_conservation_against_store(tmp_path):
    from huntdeck.store import EventStore

    rng = random.Random(9)
    store = EventStore(tmp_path / "data", clock=lambda: 10**14)
    store.append_events(random_events(rng, 1500))
    for _ in range(25):
        flt = random_filter(rng)
        width = rng.choice([1_000, 5_000, 60_000])
        events = store.events_matching(flt)
        series = bucketize(events, flt.time_from, flt.time_to, width)
        assert series.total == store.query(flt, page_size=1000).total_estimate


def test_refinement_merge():
    rng = random.Random(13)
    events = random_events(rng, 1000, t0=0, span=512_000)
    w = 1_000
    fine = bucketize(events, 0, 512_000, w)
    coarse = bucketize(events, 0, 512_000, 2 * w)
    merged = merge_adjacent(fine)
    assert merged.bucket_width_ms == coarse.bucket_width_ms
    assert [b.bucket_start for b in merged.buckets] == [b.bucket_start for b in coarse.buckets]
    assert [b.counts for b in merged.buckets] == [b.counts for b in coarse.buckets]


def test_shift_equivariance():
    rng = random.Random(17)
    base = random_events(rng, 300, t0=10_000, span=90_000)
    w = 1_000
    k = 7
    shifted = [mk_event(e.ts + k * w, e.category, e.asset_id, e.severity, e.title + "s") for e in base]
    s1 = bucketize(base, 10_000, 100_000, w)
    s2 = bucketize(shifted, 10_000 + k * w, 100_000 + k * w, w)
    assert [b.total() for b in s2.buckets] == [b.total() for b in s1.buckets]
    assert s2.start == s1.start + k * w


def test_compare_identical_pattern_gives_unit_ratios():
    pattern = [(i * 500, "alert") for i in range(40)] + [(i * 900, "raw") for i in range(20)]
    past = [mk_event(100_000 + dt, cat, title=f"p {dt} {cat}") for dt, cat in pattern]
    cur = [mk_event(300_000 + dt, cat, title=f"c {dt} {cat}") for dt, cat in pattern]
    comp = compare_windows(cur, past, 300_000, 340_000, 100_000, 1_000)
    assert comp.alignment_offset_ms == 200_000
    assert len(comp.current.buckets) == len(comp.past.buckets)
    for delta in comp.deltas.values():
        assert delta.ratio == 1.0 and not delta.new


def test_compare_empty_past_flags_new():
    cur = [mk_event(300_000 + i * 100, "alert") for i in range(30)]
    comp = compare_windows(cur, [], 300_000, 310_000, 100_000, 1_000)
    assert comp.deltas["alert"].new
    assert comp.deltas["alert"].ratio is None


def test_compare_rejects_overlapping_windows():
    with pytest.raises(TimelineError):
        compare_windows([], [], 1000, 2000, 500, 100)


def test_compare_buckets_align_by_index():
    # events at the same relative offset land in the same bucket index
    past = [mk_event(100_123)]
    cur = [mk_event(200_123)]
    comp = compare_windows(cur, past, 200_000, 201_000, 100_000, 100)
    cur_idx = [i for i, b in enumerate(comp.current.buckets) if b.total()]
    past_idx = [i for i, b in enumerate(comp.past.buckets) if b.total()]
    assert cur_idx == past_idx == [1]
